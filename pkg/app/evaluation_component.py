"""
Evaluation commands: eval, ablate, report
"""
from app.command_component import CommandComponent
from forensics.evaluation.ablation import AblationAxis, run_ablation
from forensics.evaluation.protocol import Protocol, run_protocol
from forensics.evaluation.report import render_report


class EvaluationComponent(CommandComponent):
    """eval, ablate, report"""

    def setup_parser(self):
        evaluate = self.add_command("eval", self.run_eval, "Run an open-set evaluation protocol")
        self.add_config_arguments(evaluate)
        evaluate.add_argument("--protocol", default=Protocol.CROSS_MANIPULATION.value,
                              choices=[p.value for p in Protocol])
        evaluate.add_argument("--target", help="Target dataset root for cross-dataset")
        evaluate.add_argument("--lambda", dest="lambda_percentile", type=float, help="Percentile in [0, 100]")
        evaluate.add_argument("--alpha", type=float, help="Real-anchor weight of the weighted loss")

        ablate = self.add_command("ablate", self.run_ablate, "Cross-manipulation runs along one ablation axis")
        self.add_config_arguments(ablate)
        ablate.add_argument("--axis", required=True, choices=[a.value for a in AblationAxis])
        ablate.add_argument("--values", nargs="+", help="Axis values (default grid when omitted)")
        ablate.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])

        report = self.add_command("report", self.run_report, "Aggregate reports into tables and plots")
        report.add_argument("--out", required=True, help="Output tree holding report.json files")

    def run_eval(self, args):
        config = self.load_run_config(args)
        self.update_status(f"Running {args.protocol} into {config.output_dir}...")
        reports = run_protocol(config, args.protocol, target_root=args.target, out_dir=config.output_dir,
                               callback=self.progress_callback)
        for report in reports:
            self.update_status(f"{report.combination}: unknown AUROC {report.unknown_auroc:.4f}, "
                               f"TOSC {report.tosc:.4f}, merged TOSC {report.tosc_deepfake_merged:.4f}")
        return reports

    def run_ablate(self, args):
        config = self.load_run_config(args)
        _, summary = run_ablation(config, args.axis, values=args.values, seeds=args.seeds,
                                  out_dir=config.output_dir, callback=self.progress_callback)
        self.update_status(f"Ablation {args.axis}:\n{summary.to_string(float_format=lambda x: f'{x:.4f}')}")
        return summary

    def run_report(self, args):
        return render_report(args.out, callback=self.progress_callback)
