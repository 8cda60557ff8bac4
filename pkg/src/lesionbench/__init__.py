"""lesionbench: a desk-scale skin-lesion image classification pipeline.

The package covers the full loop needed to study classifier behaviour on
small dermatology-style datasets without any clinical data on disk:

* ``lesionbench.data`` — image manifests, Pascal-VOC box parsing, splits,
  cleaning, per-class statistics and frequency weights.
* ``lesionbench.synthgen`` — deterministic synthetic lesion datasets with
  exact ground truth (class, bounding box, generative parameters).
* ``lesionbench.pipeline`` — transforms, losses, LR schedule, compact CNN
  backbones and the fine-tuning/prediction loop.
* ``lesionbench.ensemble`` — probability-sum ensembling and exhaustive
  subset search.
* ``lesionbench.detect`` — detection-based classification built on
  pluggable box detectors.
* ``lesionbench.metrics`` — imbalance-aware top-k evaluation.
* ``lesionbench.app`` — command line interface, report rendering and a
  small HTTP inference service.
"""

__version__ = "0.1.0"
