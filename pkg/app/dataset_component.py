"""
Dataset commands: synthetic benchmark generation
"""
from app.command_component import CommandComponent
from forensics import settings
from forensics.data.synthetic import OPERATORS, generate_synthetic_benchmark


class DatasetComponent(CommandComponent):
    """synth-gen"""

    def setup_parser(self):
        parser = self.add_command("synth-gen", self.run_synth_gen,
                                  "Generate the synthetic face-forgery benchmark")
        parser.add_argument("--out", required=True, help="Output dataset root")
        parser.add_argument("--seed", type=int, default=0, help="Dataset seed")
        parser.add_argument("--n-videos", type=int, default=settings.N_VIDEOS)
        parser.add_argument("--frames", type=int, default=settings.FRAMES_PER_VIDEO, help="Frames per video")
        parser.add_argument("--side", type=int, default=settings.SYNTHETIC_IMAGE_SIDE, help="Image side in pixels")
        parser.add_argument("--methods", nargs="+", default=list(settings.SYNTHETIC_METHODS),
                            choices=sorted(OPERATORS), help="Forgery operators to apply")
        parser.add_argument("--workers", type=int, default=1)

    def run_synth_gen(self, args):
        self.update_status(f"Generating synthetic benchmark into {args.out}...")
        manifest = generate_synthetic_benchmark(args.seed, args.n_videos, args.frames, args.out,
                                                side=args.side, methods=tuple(args.methods),
                                                workers=args.workers, callback=self.progress_callback)
        self.update_status(f"Wrote {len(manifest)} frames over classes {manifest.methods}")
        return manifest
