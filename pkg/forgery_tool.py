#!/usr/bin/env python3
"""
Forgery Detection Tool Entry Point

Open-set detection of facial forgeries:
- Synthetic face-forgery benchmark generation
- Two-stage training (weighted supervised contrastive encoder, frozen-encoder classifier)
- Class-wise rejection thresholds and open-set classification
- Cross-manipulation, cross-family and cross-dataset protocols, ablations and reports
- Grad-CAM and embedding projections

For research purposes only.
"""

import importlib
import logging
import sys
from pathlib import Path

REQUIRED_PACKAGES = {
    "torch": "torch",
    "torchvision": "torchvision",
    "numpy": "numpy",
    "scipy": "scipy",
    "PIL": "Pillow",
    "pandas": "pandas",
    "sklearn": "scikit-learn",
    "umap": "umap-learn",
    "matplotlib": "matplotlib",
    "yaml": "PyYAML",
    "tqdm": "tqdm",
    "Crypto": "pycryptodome",
}


def setup_logging():
    """Configure logging for the application"""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def check_dependencies():
    """Check if required packages are installed"""
    missing_packages = []
    for module, package in REQUIRED_PACKAGES.items():
        try:
            importlib.import_module(module)
        except ImportError:
            missing_packages.append(package)

    if missing_packages:
        logging.error(f"Missing dependencies: {', '.join(missing_packages)}")
        print("Please install the following required packages:")
        for package in missing_packages:
            print(f"  - {package}")
        print("\nRun: pip install -r requirements.txt")
        return False

    return True


def main(argv=None):
    """Main entry point for the Forgery Detection Tool"""
    setup_logging()

    # Add project root to Python path
    project_root = Path(__file__).parent
    sys.path.append(str(project_root))

    if not check_dependencies():
        sys.exit(1)

    from app.main_app import ForgeryTool
    sys.exit(ForgeryTool().run(argv))


if __name__ == "__main__":
    main()
