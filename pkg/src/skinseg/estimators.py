"""Scikit-learn style transformers wrapping the segmentation pipeline.

Both transformers are stateless in the sklearn sense: fit only validates
parameters and returns self, so they compose in a Pipeline and survive
clone().  Parameters are stored verbatim under their constructor names,
per the estimator contract.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin

from .segmentation import LabelGrid, SegmentationConfig, segment_volume
from .surface import TriangleMesh, extract_surface
from .validation import check_label_grid, check_volume
from .volume_io import Volume, VoxelCoord


class SkinSegmenter(BaseEstimator, TransformerMixin):
    """Transform a Volume into a LabelGrid via seeded background flood fill.

    Parameters mirror SegmentationConfig.  After transform, the threshold
    actually used is available as `isovalue_report_`.

    >>> SkinSegmenter(isovalue_strategy="fixed").fit(volume).transform(volume)
    """

    def __init__(
        self,
        isovalue_strategy: str = "fixed",
        isovalue: float | None = None,
        connectivity: int = 4,
        pad_width: int = 1,
        seed_policy: str = "corner_scan",
        explicit_seed: VoxelCoord | None = None,
        subsample_factor=(1, 1, 1),
    ):
        self.isovalue_strategy = isovalue_strategy
        self.isovalue = isovalue
        self.connectivity = connectivity
        self.pad_width = pad_width
        self.seed_policy = seed_policy
        self.explicit_seed = explicit_seed
        self.subsample_factor = subsample_factor

    def _to_config(self) -> SegmentationConfig:
        return SegmentationConfig(
            isovalue_strategy=self.isovalue_strategy,
            isovalue=self.isovalue,
            connectivity=self.connectivity,
            pad_width=self.pad_width,
            seed_policy=self.seed_policy,
            explicit_seed=self.explicit_seed,
            subsample_factor=self.subsample_factor,
        )

    def fit(self, X: Volume = None, y=None) -> "SkinSegmenter":
        self._to_config().validate()
        return self

    def transform(self, X: Volume) -> LabelGrid:
        check_volume(X)
        labels, report = segment_volume(X, self._to_config())
        self.isovalue_report_ = report
        return labels

    def __sklearn_is_fitted__(self) -> bool:
        # Stateless: fit only validates, so the estimator is always usable.
        return True


class SurfaceExtractor(BaseEstimator, TransformerMixin):
    """Transform a LabelGrid into the TriangleMesh of its body boundary."""

    def fit(self, X: LabelGrid = None, y=None) -> "SurfaceExtractor":
        return self

    def transform(self, X: LabelGrid) -> TriangleMesh:
        check_label_grid(X)
        return extract_surface(X)

    def __sklearn_is_fitted__(self) -> bool:
        return True
