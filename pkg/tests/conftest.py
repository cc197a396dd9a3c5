import numpy as np
import pytest
import scipy.ndimage as ndi

from pupilkit.contours import OUTER
from pupilkit.image_core import BinaryImage

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def disk_mask(h, w, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def binary(mask) -> BinaryImage:
    return BinaryImage.from_mask(np.asarray(mask, dtype=bool))


def glint_scene(seed: int = 0):
    """Pupil r=30 at the frame centre with a bright r=20 glint centred on its right edge."""
    from pupilkit.synth import EyeSceneParams, Glint

    cx, cy = 639 / 2, 479 / 2
    return EyeSceneParams(glint=Glint((cx + 30, cy), 20), seed=seed)


EIGHT = np.ones((3, 3), dtype=int)
FOUR = ndi.generate_binary_structure(2, 1)


def oracle_counts(mask: np.ndarray) -> tuple[int, int]:
    """(8-connected regions, 4-connected holes) by component labelling."""
    _, regions = ndi.label(mask, structure=EIGHT)
    # pad with background so the frame-connected background is one component
    bg, nbg = ndi.label(np.pad(~mask, 1, constant_values=True), structure=FOUR)
    return regions, nbg - 1


def check_well_formed(contours, hier):
    n = len(contours)
    assert len(hier) == n
    for i, node in enumerate(hier.nodes):
        if node.parent is not None:
            assert 0 <= node.parent < n
            assert i in hier.children(node.parent)
            # kinds alternate with depth
            assert contours[i].kind != contours[node.parent].kind
        else:
            assert contours[i].kind == OUTER
        if node.first_child is not None:
            assert hier[node.first_child].parent == i
            assert hier[node.first_child].prev_sibling is None
        if node.next_sibling is not None:
            assert hier[node.next_sibling].prev_sibling == i
            assert hier[node.next_sibling].parent == node.parent
        if node.prev_sibling is not None:
            assert hier[node.prev_sibling].next_sibling == i
        # acyclic: walking parents terminates within n steps
        seen, p = set(), i
        while p is not None:
            assert p not in seen
            seen.add(p)
            p = hier[p].parent
    # each node appears in exactly one sibling list
    listed = list(hier.roots())
    for i in range(n):
        listed += hier.children(i)
    assert sorted(listed) == list(range(n))
