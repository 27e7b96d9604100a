"""
Training commands: train and calibrate
"""
from app.command_component import CommandComponent
from forensics.evaluation.protocol import calibrate_run, train_run


class TrainingComponent(CommandComponent):
    """train, calibrate"""

    def setup_parser(self):
        train = self.add_command("train", self.run_train, "Stage 1 + weight averaging + Stage 2 on known classes")
        self.add_config_arguments(train)
        train.add_argument("--alpha", type=float, help="Real-anchor weight of the weighted loss")
        train.add_argument("--unknown", help="Forgery method held out of training")

        calibrate = self.add_command("calibrate", self.run_calibrate,
                                     "Estimate class-wise rejection thresholds of a trained run")
        self.add_config_arguments(calibrate, with_out=False)
        calibrate.add_argument("--run-dir", required=True, help="Directory written by train")
        calibrate.add_argument("--lambda", dest="lambda_percentile", type=float, help="Percentile in [0, 100]")

    def run_train(self, args):
        config = self.load_run_config(args)
        self.update_status(f"Training into {config.output_dir}...")
        trained = train_run(config, config.output_dir, unknown=args.unknown, callback=self.progress_callback)
        self.update_status(f"Model saved to {trained.model_path}")
        return trained

    def run_calibrate(self, args):
        config = self.load_run_config(args)
        table = calibrate_run(config, args.run_dir, args.lambda_percentile)
        for name, eps in table.epsilon.items():
            self.update_status(f"{name}: epsilon={eps:.4f} (support {table.support_counts[name]})")
        return table
