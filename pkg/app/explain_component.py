"""
Explainability command
"""
from app.command_component import CommandComponent
from forensics.explain.artifacts import explain_run
from forensics.explain.projection import ProjectionMethod

PROJECTIONS = {"tsne": ProjectionMethod.TSNE_STYLE, "umap": ProjectionMethod.UMAP_STYLE}


class ExplainComponent(CommandComponent):
    """explain"""

    def setup_parser(self):
        parser = self.add_command("explain", self.run_explain, "Grad-CAM overlays and embedding projections")
        self.add_config_arguments(parser, with_out=False)
        parser.add_argument("--run-dir", required=True, help="Directory written by train")
        parser.add_argument("--n-samples", type=int, default=8, help="Test samples explained per class")
        parser.add_argument("--projection", default="tsne", choices=sorted(PROJECTIONS))

    def run_explain(self, args):
        config = self.load_run_config(args)
        return explain_run(config, args.run_dir, n_samples=args.n_samples,
                           method=PROJECTIONS[args.projection], callback=self.progress_callback)
