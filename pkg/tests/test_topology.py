import csv
import io
import json

import numpy as np
import pytest

from nhcavity.nonhermitian import SystemParams
from nhcavity.topology import (DiscretizationError, IllDefinedWinding, LoopSpec, classify_loop,
                               eigenvector_holonomy, track_eigenvalues_on_loop, winding_along_path,
                               winding_number)

from conftest import GAMMA

FIG5 = dict(g_center=121.5, delta_center=0.0, radius=56.5)


def base(kappa):
    return SystemParams.resonant(GAMMA, kappa, 121.5)


def loop(**kw):
    return LoopSpec(**{**FIG5, **kw})


@pytest.mark.parametrize("kw", [dict(radius=-1.0), dict(n_steps=8), dict(n_steps=100.5),
                                dict(radius=130.0), dict(orientation="sideways")])
def test_loop_validation(kw):
    with pytest.raises(ValueError):
        loop(**kw)


def test_loop_points_closed_and_oriented():
    theta, g, d = loop(n_steps=64).points()
    assert theta.size == 65
    assert g[0] == pytest.approx(g[-1]) and d[0] == pytest.approx(d[-1], abs=1e-12)
    # counterclockwise in the (delta/2, g) plane: delta decreases first while g starts at its max
    assert d[1] < 0
    _, _, d_cw = loop(n_steps=64, orientation="clockwise").points()
    assert np.allclose(d_cw, -d)


def test_enclosing_loop_swaps_and_crosses_at_pi():
    res = track_eigenvalues_on_loop(base(246.0), loop())
    assert res.permutation == "swap"
    assert res.winding_total == 1.0
    assert len(res.branch_cut_crossings) == 1
    assert res.theta[res.branch_cut_crossings[0]] == pytest.approx(np.pi, abs=0.02)


def test_distant_loop_is_two_unknots():
    res = track_eigenvalues_on_loop(base(12.7), loop())
    assert res.permutation == "identity"
    assert res.winding_total == 0.0


def test_point_loop_is_stationary():
    res = track_eigenvalues_on_loop(base(246.0), loop(radius=0.0, g_center=80.0))
    assert res.permutation == "identity"
    assert np.all(res.strand_plus == res.strand_plus[0])
    assert np.all(res.strand_minus == res.strand_minus[0])


@pytest.mark.parametrize("kappa", [12.7, 246.0, 300.0])
def test_strand_continuity_and_closure(kappa):
    res = track_eigenvalues_on_loop(base(kappa), loop())
    for strand in (res.strand_plus, res.strand_minus):
        assert np.max(np.abs(np.diff(strand))) < res.continuity_bound
    ends = sorted([res.strand_plus[-1], res.strand_minus[-1]], key=lambda z: (z.imag, z.real))
    starts = sorted([res.strand_plus[0], res.strand_minus[0]], key=lambda z: (z.imag, z.real))
    assert np.allclose(ends, starts, rtol=0, atol=1e-9 * 250)


def test_braid_csv_roundtrip():
    res = track_eigenvalues_on_loop(base(246.0), loop(n_steps=32))
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["theta", "re_e_plus", "im_e_plus", "re_e_minus", "im_e_minus"]
    assert len(rows) == 34
    assert complex(float(rows[5][1]), float(rows[5][2])) == res.strand_plus[4]


def _grazing_loop(n_steps, rel):
    # EP placed a distance rel*R outside (rel > 0) or inside the circle, midway between two samples
    r, a = 50.0 * (1 + rel), np.pi + np.pi / n_steps
    return LoopSpec(121.485 - r * np.cos(a), r * np.sin(a), 50.0, n_steps=n_steps)


def test_coarse_grazing_loop_rejected():
    p = base(246.0)
    with pytest.raises(DiscretizationError, match="n_steps"):
        winding_number(_grazing_loop(16, -0.01), p)
    with pytest.raises(DiscretizationError, match="n_steps"):
        track_eigenvalues_on_loop(p, _grazing_loop(16, -0.01))
    assert winding_number(_grazing_loop(32, -0.01), p).w_total == 1.0
    assert winding_number(_grazing_loop(16, 0.01), p).w_total == 0.0


def test_phase_jump_guard():
    from nhcavity.topology import _phase_winding
    assert _phase_winding(np.exp(1j * np.linspace(0, 2 * np.pi, 9))) == pytest.approx(1.0)
    with pytest.raises(DiscretizationError, match="pi/2"):
        _phase_winding(np.exp(1j * np.linspace(0, 2 * np.pi, 5)))


@pytest.mark.parametrize("kappa,label,w", [(12.7, "trivial", 0.0), (133.0, "on_ep_ill_defined", None),
                                           (246.0, "nontrivial", 1.0)])
def test_classification_across_tips(kappa, label, w):
    res = classify_loop(loop(), base(kappa))
    assert res.label == label
    assert res.w_total == w


def test_on_ep_loop_raises_for_winding():
    with pytest.raises(IllDefinedWinding):
        winding_number(loop(), base(133.0))
    with pytest.raises(IllDefinedWinding):
        track_eigenvalues_on_loop(base(133.0), loop())


def test_classification_json_shape():
    p = base(246.0)
    doc = json.loads(classify_loop(loop(), p).to_json(winding_number(loop(), p)))
    assert set(doc) == {"class", "w_plus", "w_minus", "w_total", "crossings"}
    assert (doc["w_plus"], doc["w_minus"], doc["w_total"]) == (0.5, 0.5, 1.0)


def test_contour_windings():
    p = base(246.0)
    excl = winding_number(LoopSpec(200.0, 0.0, 40.0), p)
    assert (excl.w_plus, excl.w_minus, excl.w_total) == (0.0, 0.0, 0.0)
    incl = winding_number(loop(), p)
    assert (incl.w_plus, incl.w_minus, incl.w_total) == (0.5, 0.5, 1.0)
    assert winding_number(loop(orientation="clockwise"), p).w_total == -1.0


@pytest.mark.parametrize("n_steps", [256, 1024, 4096])
@pytest.mark.parametrize("kappa,expected", [(12.7, 0.0), (246.0, 1.0)])
def test_winding_stable_under_refinement(n_steps, kappa, expected):
    assert winding_number(loop(n_steps=n_steps), base(kappa)).w_total == expected


@pytest.mark.parametrize("kappa", [12.7, 246.0])
def test_loop_plus_reverse_winds_zero(kappa):
    p = base(kappa)
    _, g1, d1 = loop().points()
    _, g2, d2 = loop(orientation="clockwise").points()
    wp, wm = winding_along_path(p, np.concatenate([g1, g2[1:]]), np.concatenate([d1, d2[1:]]))
    assert abs(wp + wm) < 1e-9


def test_swap_iff_unit_winding_on_grid():
    p = base(246.0)
    checked = 0
    for gc in np.linspace(40.0, 220.0, 10):
        for r in np.linspace(5.0, 0.95 * gc, 10):
            lp = LoopSpec(float(gc), 10.0, float(r), n_steps=512)
            if abs(lp.ep_distance(p)) < 0.02 * r:
                continue
            res = track_eigenvalues_on_loop(p, lp)
            assert (res.permutation == "swap") == (abs(res.winding_total) == 1.0)
            assert res.permutation == ("swap" if lp.ep_distance(p) < 0 else "identity")
            checked += 1
    assert checked >= 90


def _transport_oracle(p, lp, n_turns):
    # independent route: LAPACK eigenpairs, unit 2-norm, then bilinear normalization
    _, g, d = lp.points(n_turns)
    vecs, vals = [], None
    for gk, dk in zip(g, d):
        h = np.array([[p.omega_a - 1j * p.gamma, gk], [gk, p.omega_a + dk - 1j * p.kappa]])
        w, v = np.linalg.eig(h)
        if vals is not None and abs(w[0] - vals[1]) + abs(w[1] - vals[0]) < abs(w[0] - vals[0]) + abs(w[1] - vals[1]):
            w, v = w[::-1], v[:, ::-1]
        vals = w
        vecs.append(v / np.sqrt(np.sum(v * v, axis=0)))
    start = cur = vecs[0][:, 0]
    for v in vecs[1:]:
        cur = v[:, 0] if np.real(np.vdot(cur, v[:, 0])) >= 0 else -v[:, 0]
    return np.vdot(start, cur) / np.vdot(start, start)


@pytest.mark.parametrize("n_turns,expected", [(2, -1.0), (4, 1.0)])
def test_holonomy_monodromy(n_turns, expected):
    p = base(246.0)
    res = eigenvector_holonomy(p, loop(), n_turns)
    assert res.permutation == "identity"
    assert abs(res.phase_factor - expected) < 1e-3
    assert abs(_transport_oracle(p, loop(n_steps=4096), n_turns) - expected) < 1e-3


def test_holonomy_single_turn_swaps():
    assert eigenvector_holonomy(base(246.0), loop(), 1).permutation == "swap"


def test_trivial_holonomy():
    res = eigenvector_holonomy(base(12.7), loop(), 1)
    assert res.permutation == "identity"
    assert all(abs(f - 1) < 1e-3 for f in res.phase_factors)
