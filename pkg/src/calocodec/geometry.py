"""Fixed readout geometry of the nine calorimeter layer-views.

Three calorimeter segments (PCAL, ECIN, ECOUT), each read out in three
stereo views (U/V/W). Strip counts differ per layer-view; every layer-view
exposes the same fixed number of hit slots. Slot indices are list positions,
not detector channels.
"""

from __future__ import annotations

from dataclasses import dataclass

LAYER_VIEWS: tuple[str, ...] = (
    "PCAL-U",
    "PCAL-V",
    "PCAL-W",
    "ECIN-U",
    "ECIN-V",
    "ECIN-W",
    "ECOUT-U",
    "ECOUT-V",
    "ECOUT-W",
)

N_STRIPS: tuple[int, ...] = (68, 62, 62, 36, 36, 36, 36, 36, 36)

N_LAYER_VIEWS = 9
MAX_SLOTS = 20
PAD = -999
ADC_MAX = 65535


@dataclass(frozen=True)
class LayerGeometry:
    """One layer-view: identifier, strip count, slot count."""

    layer_view_id: int
    name: str
    n_strips: int
    max_slots: int = MAX_SLOTS

    def __post_init__(self) -> None:
        if not 0 <= self.layer_view_id < N_LAYER_VIEWS:
            raise ValueError(f"layer_view_id out of range: {self.layer_view_id}")
        if self.n_strips != N_STRIPS[self.layer_view_id]:
            raise ValueError(
                f"{self.name}: n_strips {self.n_strips} does not match the "
                f"fixed table value {N_STRIPS[self.layer_view_id]}"
            )
        if self.max_slots != MAX_SLOTS:
            raise ValueError("max_slots must be identical across layer-views")


GEOMETRY: tuple[LayerGeometry, ...] = tuple(
    LayerGeometry(layer_view_id=i, name=LAYER_VIEWS[i], n_strips=N_STRIPS[i])
    for i in range(N_LAYER_VIEWS)
)
