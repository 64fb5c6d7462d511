import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surgery_spectra.errors import GluingError
from surgery_spectra.glue.straighten import collar_factor, straighten
from surgery_spectra.glue.surgery import (
    GluingSpec,
    _finish,
    chart_band_width,
    cut_disk,
    glue,
    involution,
    refilled_base,
    seam_index_map,
    surgery_cuts,
)
from surgery_spectra.mesh.intrinsic import area, euler_char, orientability, validate
from surgery_spectra.mesh.primitives import build_primitive, flat_torus

SHORT_NECK = 1.5 * math.log(2.0)


@pytest.mark.parametrize(
    "spec",
    [
        GluingSpec("crosscap", p=0, eps=0.1, L=SHORT_NECK, n=7),
        GluingSpec("crosscap", p=0, eps=0.1, L=SHORT_NECK, n=6),
        GluingSpec("crosscap", p=0, eps=0.1, L=0.5, n=8),
        GluingSpec("crosscap", p=0, eps=0.0, L=SHORT_NECK, n=8),
        GluingSpec("handle", p=0, eps=0.05, L=SHORT_NECK, n=8),
        GluingSpec("handle", p=0, eps=0.01, L=SHORT_NECK, n=8, v=0.3),
        GluingSpec("bridge", p=0, eps=0.01, L=SHORT_NECK, n=8),
    ],
)
def test_invalid_specs(spec):
    with pytest.raises(GluingError):
        spec.validate()


def test_handle_direction_on_the_seam_grid():
    spec = GluingSpec("handle", p=0, eps=0.01, L=SHORT_NECK, n=8, v=math.pi / 4)
    spec.validate()
    assert spec.reflection_shift == 2


def test_spec_lines():
    spec = GluingSpec("crosscap", p=3, eps=0.1, L=1.0, n=8)
    assert spec.to_lines() == ["kind=crosscap", "p=3", "eps=0.1", "L=1.0", "n=8", "v=0.0"]


def test_chart_band_width_tends_to_circumference():
    assert chart_band_width(8) < 2.0 * math.pi
    assert chart_band_width(1024) == pytest.approx(2.0 * math.pi, rel=1e-5)


def test_cut_disk_leaves_regular_loop(capped_sphere):
    cut = cut_disk(capped_sphere, 0, 0.1, 8)
    loop = cut.loop
    assert len(loop) == 8
    assert loop.radius == 0.1
    assert_allclose(loop.angles, 2.0 * math.pi * np.arange(8) / 8)
    for j in range(8):
        a, b = loop.vertices[j], loop.vertices[(j + 1) % 8]
        assert cut.mesh.length_of(a, b) == pytest.approx(0.2 * math.sin(math.pi / 8), rel=1e-12)
    assert 0 in cut.removed_vertices
    assert cut.old_to_new[0] == -1
    assert euler_char(cut.mesh) == 1
    assert validate(cut.mesh) == []


def test_cut_disk_outside_patch(capped_sphere):
    with pytest.raises(GluingError):
        cut_disk(capped_sphere, 0, 0.5, 8)


def test_surgery_point_must_be_in_a_patch(capped_sphere):
    far = 3  # antipode of vertex 0
    assert far not in capped_sphere.flat_patches[0].chart
    with pytest.raises(GluingError):
        glue(capped_sphere, GluingSpec("crosscap", p=far, eps=0.1, L=SHORT_NECK, n=8))


def test_crosscap_gives_projective_plane(crosscap):
    mesh = crosscap.mesh
    assert validate(mesh) == []
    assert euler_char(mesh) == 1
    assert mesh.orientable is False
    assert orientability(mesh) is False
    assert mesh.boundary_loops == ()
    assert crosscap.kind == "crosscap"
    assert crosscap.band_grid.shape[1] == 8
    assert_array_equal(crosscap.band_grid[-1], crosscap.seams[0].vertices)
    assert_array_equal(seam_index_map(crosscap), np.arange(8))


def test_crosscap_keeps_base_vertices(crosscap, capped_sphere):
    kept = crosscap.base_to_glued >= 0
    assert not kept[0]
    assert kept.sum() == capped_sphere.vertex_count - 1
    assert len(np.unique(crosscap.base_to_glued[kept])) == kept.sum()


def test_crosscap_has_no_involution(crosscap):
    with pytest.raises(GluingError):
        involution(crosscap)


def test_refilled_base_restores_area(capped_sphere, crosscap_spec):
    refilled, mapping = refilled_base(capped_sphere, crosscap_spec)
    assert validate(refilled) == []
    assert euler_char(refilled) == 2
    assert refilled.boundary_loops == ()
    assert area(refilled) == pytest.approx(area(capped_sphere), rel=1e-10)
    assert mapping.shape == (capped_sphere.vertex_count,)
    assert mapping[0] == -1


def test_surgery_cuts_for_crosscap(capped_sphere, crosscap_spec):
    cuts = surgery_cuts(capped_sphere, crosscap_spec)
    assert len(cuts) == 1


def test_collar_factor_profile():
    eps = 0.01
    assert collar_factor(np.array([eps]), eps)[0] == pytest.approx(1.0)
    assert collar_factor(np.array([eps * math.exp(0.3)]), eps)[0] == pytest.approx(1.0)
    assert collar_factor(np.array([2.0 * eps]), eps)[0] == pytest.approx(1.0)
    middle = collar_factor(np.array([eps * math.exp(0.1)]), eps)[0]
    assert 0.0 < middle < 1.0


def test_straighten_crosscap(crosscap):
    straight, rho = straighten(crosscap)
    assert straight.vertex_count == crosscap.mesh.vertex_count
    assert (rho >= 1.0 - 1e-12).all()
    assert validate(straight) == []
    # rho times the straightened metric is the glued metric
    assert area(straight, rho) == pytest.approx(area(crosscap.mesh), rel=0.05)


@pytest.mark.slow
def test_handle_gives_torus():
    base = flat_torus(48)
    spec = GluingSpec("handle", p=0, eps=0.01, L=SHORT_NECK, n=8, v=0.0)
    cuts = surgery_cuts(base, spec)
    assert len(cuts) == 2
    glued = glue(base, spec)
    assert validate(glued.mesh) == []
    assert euler_char(glued.mesh) == -2
    assert glued.mesh.orientable is True
    assert [seam.end for seam in glued.seams] == ["p", "q"]
    assert_array_equal(involution(glued), (-np.arange(8)) % 8)
    refilled, _ = refilled_base(base, spec)
    assert euler_char(refilled) == 0
    assert area(refilled) == pytest.approx(1.0, rel=1e-10)


def test_crosscap_on_default_icosphere():
    base = build_primitive("icosphere", subdiv=3)
    glued = glue(base, GluingSpec("crosscap", p=0, eps=0.1, L=SHORT_NECK, n=8))
    assert validate(glued.mesh) == []
    assert euler_char(glued.mesh) == 1
    assert glued.mesh.orientable is False


def test_orientability_mismatch_is_an_error(square_torus, crosscap):
    with pytest.raises(GluingError):
        _finish(square_torus, "torus#RP2", nonorientable=True)
    with pytest.raises(GluingError):
        _finish(crosscap.mesh, "rp2#T2", nonorientable=False)
    assert _finish(square_torus, "torus#T2", nonorientable=False).name == "torus#T2"
