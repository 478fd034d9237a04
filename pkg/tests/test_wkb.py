import json
import math

import numpy as np
import pytest

from qpwkb import actions, hill, wkb
from qpwkb.errors import HypothesisError, InvariantViolation, ReclassifyAsResonant, WrongRegime

E9 = [0.0, 3.8571429, 6.8571429, 12.100395, 100.70923]
V9 = hill.PeriodicPotential.finite_gap(E9)
PI = math.pi


class StubWindow:
    """Stands in for WindowActions: at(E) returns affine actions."""

    def __init__(self, **kw):
        self.kw = kw

    def at(self, E):
        k = dict(self.kw)
        phi0 = k.pop("phi0")
        return actions.ActionSet(E=E, phi0=phi0(E) if callable(phi0) else phi0, sh0=k["sh"] / 2,
                                 sh_pi=k["sh"] / 2, **{x: k[x] for x in k if x != "sh"})


def _pair(E0=5.0, Epi=5.0, lam=1.5, sh=1.0, sv0=0.8, sv_pi=0.9, eps=0.05, d0=-0.5, dpi=0.6):
    return wkb.ResonantPair(E0=E0, Epi=Epi, epsilon=eps, lam=lam, sh=sh, sv0=sv0, sv_pi=sv_pi,
                            dphi0=d0, dphi_pi=dpi)


# ------------------------------------------------------------ quantization

def test_quantize_linear_phase():
    seq = wkb.quantize(lambda E: np.asarray(E, float), (1.0, 2.0), 0.1)
    ref = [0.1 * (PI / 2 + PI * l) for l in range(10)]
    ref = [e for e in ref if 1.0 <= e <= 2.0]
    assert np.allclose(seq.energies, ref, atol=1e-13)
    assert list(seq.levels) == [3, 4, 5]
    assert seq.spacing_C == pytest.approx(PI, rel=1e-9)  # spacing 0.1 pi


def test_quantize_decreasing_phase():
    seq = wkb.quantize(lambda E: 3.0 - np.asarray(E, float), (1.0, 2.0), 0.1)
    assert np.all(np.diff(seq.energies) > 0)
    for e, l in zip(seq.energies, seq.levels):
        assert abs((3.0 - e) / 0.1 - (PI / 2 + PI * l)) < 1e-10


def test_quantize_rejects_non_monotone_phase():
    with pytest.raises(InvariantViolation):
        wkb.quantize(lambda E: (np.asarray(E) - 1.5) ** 2, (1.0, 2.0), 0.01)


@pytest.fixture(scope="module")
def wa2():
    return wkb.WindowActions(V9, 1, 2.0, (5.0, 5.8))


def test_quantize_reference_window_count_and_residuals(wa2):
    eps = 0.05
    for s, kind in ((PI, "typePi"), (0, "type0")):
        phi = wa2.phi(s)
        seq = wkb.quantize(phi, wa2.J, eps, kind)
        span = abs(phi(np.array([5.8]))[0] - phi(np.array([5.0]))[0]) / (PI * eps)
        assert abs(len(seq) - span) <= 1
        res = phi(seq.energies) / eps - (PI / 2 + PI * seq.levels)
        assert np.max(np.abs(res)) < 1e-10
        assert 1 <= seq.spacing_C < 20


def test_sequences_move_in_opposite_directions_as_eps_decreases(wa2):
    # type-pi points move left, type-0 points right
    eps = (0.05, 0.0499)
    s0 = [wkb.quantize(wa2.phi(0), wa2.J, e, "type0") for e in eps]
    sp = [wkb.quantize(wa2.phi(PI), wa2.J, e, "typePi") for e in eps]
    for a, b in ((s0[0], s0[1]), (sp[0], sp[1])):
        common = np.intersect1d(a.levels, b.levels)
        da = a.energies[np.isin(a.levels, common)]
        db = b.energies[np.isin(b.levels, common)]
        sign = np.sign(db - da)
        assert np.all(sign == sign[0])
        if a.kind == "typePi":
            assert sign[0] < 0
        else:
            assert sign[0] > 0


# ------------------------------------------------------------ coarse intervals

def test_delta0_scales_with_actions():
    sh, sv0, svp = np.array([1.3, 1.2]), np.array([6.9, 7.0]), np.array([7.7, 7.8])
    assert wkb.delta0(sh, sv0, svp) == 0.6
    assert wkb.delta0(sh / 2, sv0 / 2, svp / 2) == 0.3


def _seq(kind, energies, eps=0.05):
    return wkb.QuantizedSequence(kind=kind, energies=np.array(energies), levels=np.arange(len(energies)),
                                 epsilon=eps)


def test_coarse_intervals_far_apart_no_pairs():
    r = wkb.coarse_intervals(_seq("type0", [1.0, 1.1]), _seq("typePi", [1.05, 1.15]), 0.5, 0.05)
    assert r.pairs == [] and r.at_most_one
    assert r.halfwidth == pytest.approx(math.exp(-10))
    assert all(iv.dos_weight == 0.05 / (2 * PI) for iv in r.intervals)


def test_coarse_intervals_coincident_roots_pair():
    r = wkb.coarse_intervals(_seq("type0", [1.0, 1.1]), _seq("typePi", [1.0, 1.15]), 0.5, 0.05)
    assert r.pairs == [(0, 0)]
    assert r.intervals[0].resonant and r.intervals[2].resonant and not r.intervals[1].resonant


def test_window_delta0_matches_grid_minimum(wa2):
    d = wkb.window_delta0(wa2)
    p = wa2.profile(np.linspace(5.0, 5.8, 401))
    assert d <= wkb.delta0(p["sh"], p["sv0"], p["sv_pi"]) + 1e-12
    assert d == pytest.approx(wkb.delta0(p["sh"], p["sv0"], p["sv_pi"]), abs=1e-6)


# ------------------------------------------------------------ non-resonant refinement

def test_refine_shift_arithmetic():
    eps = 0.05
    wa = StubWindow(phi0=eps * PI / 4, phi_pi=1.0, sv0=5.0, sv_pi=5.0, sh=-eps * math.log(1e-6),
                    dphi0=-1.0, dphi_pi=1.0)
    iv = wkb.SpectralInterval(center=2.0, halfwidth=1e-3, kind="typePi")
    out = wkb.refine_nonresonant(iv, wa, eps, 1.5)
    assert out.flags["tan"] == pytest.approx(1.0, rel=1e-12)
    assert out.flags["shift"] == pytest.approx(3.75e-8, rel=1e-9)


def test_refine_anti_resonant_has_no_shift():
    eps = 0.05
    th, tv = 1e-6, math.exp(-5.0 / eps)
    wa = StubWindow(phi0=eps * 4 * PI, phi_pi=1.0, sv0=5.0, sv_pi=5.0, sh=-eps * math.log(th),
                    dphi0=-1.0, dphi_pi=0.8)
    iv = wkb.SpectralInterval(center=2.0, halfwidth=1e-3, kind="typePi")
    out = wkb.refine_nonresonant(iv, wa, eps, 1.5)
    assert abs(out.flags["shift"]) < 1e-20
    assert out.halfwidth == pytest.approx(eps / 0.8 * (th / 2 + tv), rel=1e-12)


@pytest.mark.parametrize("offset,sign", [(-0.01, -1), (0.01, 1)])
def test_refine_repulsion_sign(offset, sign):
    eps, E0 = 0.05, 1.0
    const = eps * (PI / 2 + 10 * PI) + 2 * E0
    wa = StubWindow(phi0=lambda E: const - 2 * E, phi_pi=1.0, sv0=5.0, sv_pi=5.0, sh=0.6,
                    dphi0=-2.0, dphi_pi=1.0)
    iv = wkb.SpectralInterval(center=E0 + offset, halfwidth=1e-3, kind="typePi")
    out = wkb.refine_nonresonant(iv, wa, eps, 1.2)
    assert np.sign(out.flags["shift"]) == sign == -np.sign(E0 - (E0 + offset))


def test_refine_reclassifies_when_leaving_coarse_interval():
    eps = 0.05
    wa = StubWindow(phi0=eps * (PI / 2 - 1e-9), phi_pi=1.0, sv0=5.0, sv_pi=5.0, sh=0.3,
                    dphi0=-1.0, dphi_pi=1.0)
    iv = wkb.SpectralInterval(center=2.0, halfwidth=1e-6, kind="typePi")
    with pytest.raises(ReclassifyAsResonant):
        wkb.refine_nonresonant(iv, wa, eps, 1.5)


# ------------------------------------------------------------ classification

def test_classify_log_plus_clamp():
    eps = 0.05
    act = actions.ActionSet(E=1.0, phi0=1, phi_pi=1, sv0=2.0, sv_pi=2.0, sh0=0.5, sh_pi=0.5)
    iv = wkb.SpectralInterval(center=1.0, halfwidth=1e-9, kind="typePi")
    log_lam = wkb.classify_nonresonant(iv, None, eps, [1.2], act=act)
    assert log_lam < 0 and iv.lyapunov["value"] == 0.0
    assert iv.nature == "mostly_ac" and iv.flags["diophantine_caveat"]


def test_classify_singular_and_far_field():
    eps = 0.05
    act = actions.ActionSet(E=1.0, phi0=1, phi_pi=1, sv0=0.4, sv_pi=0.4, sh0=0.5, sh_pi=0.5)
    iv = wkb.SpectralInterval(center=1.0, halfwidth=1e-9, kind="type0")
    log_lam = wkb.classify_nonresonant(iv, None, eps, [1.1], act=act)
    assert log_lam == pytest.approx(0.6 / eps + math.log(0.1))
    assert iv.nature == "singular"
    assert iv.lyapunov["value"] == pytest.approx(eps / (2 * PI) * log_lam)
    assert iv.lyapunov["far_field"] == pytest.approx(0.6 / (2 * PI))


def test_far_field_with_exponentially_small_distance_is_consistent():
    # dist = exp(-delta/eps): (eps/2pi) log lambda equals (S_h - S_v - delta)/(2 pi)
    eps, delta = 0.05, 0.2
    act = actions.ActionSet(E=1.0, phi0=1, phi_pi=1, sv0=0.3, sv_pi=0.3, sh0=0.5, sh_pi=0.5)
    iv = wkb.SpectralInterval(center=1.0, halfwidth=1e-9, kind="type0")
    wkb.classify_nonresonant(iv, None, eps, [1.0 + math.exp(-delta / eps)], act=act)
    assert iv.lyapunov["value"] == pytest.approx(wkb.theta_far_field(1.0, 0.3, delta), rel=1e-12)


def test_classify_undetermined_inside_margin():
    eps = 0.05
    act = actions.ActionSet(E=1.0, phi0=1, phi_pi=1, sv0=1.0, sv_pi=1.0, sh0=0.5, sh_pi=0.5)
    iv = wkb.SpectralInterval(center=1.0, halfwidth=1e-9, kind="type0")
    wkb.classify_nonresonant(iv, None, eps, [2.0], act=act)
    assert iv.nature == "undetermined"


def test_alternation_detector():
    prof = {"sh": np.array([1.0, 1.0]), "sv0": np.array([0.5, 0.6]), "sv_pi": np.array([1.5, 1.4])}
    assert wkb.alternation(prof) == {"holds": True, "singular": "type0", "mostly_ac": "typePi"}
    mirror = {"sh": prof["sh"], "sv0": prof["sv_pi"], "sv_pi": prof["sv0"]}
    assert wkb.alternation(mirror)["singular"] == "typePi"
    assert not wkb.alternation(prof, delta=0.45)["holds"]


def test_transition_conditions():
    prof = {"sh": np.array([2.0, 2.1]), "sv0": np.array([1.5, 1.6]), "sv_pi": np.array([1.7, 1.9])}
    assert wkb.transition_conditions(prof) == {"sh_dominant": True, "sh_bounded": True}
    prof["sh"] = prof["sh"] * 2
    assert wkb.transition_conditions(prof) == {"sh_dominant": True, "sh_bounded": False}


# ------------------------------------------------------------ resonances, large tau

def test_large_tau_center_lyapunov():
    p = _pair(sh=3.0, sv0=0.8, sv_pi=0.9)
    r = wkb.analyze_resonant_large_tau(p)
    assert r.theta_center == pytest.approx(p.epsilon / PI * p.log_tau, rel=1e-14)
    # leading term (S_h - S_v0 - S_vpi)/(2 pi); the rest is (eps/pi) log 2
    assert r.theta_center - p.gap_margin / (2 * PI) == pytest.approx(p.epsilon / PI * math.log(2))
    assert not r.disjoint and r.dos == {"union": p.epsilon / PI}


def test_large_tau_edge_lyapunov_with_unequal_tunneling():
    # centred at 0 so the exponentially thin interval is resolved in floating point
    p = _pair(E0=0.0, Epi=0.0, sh=4.0, sv0=1.5, sv_pi=0.6, eps=0.02)
    r = wkb.analyze_resonant_large_tau(p)
    edge = r.Ipi[1]
    assert abs(float(p.xi(edge, 1))) == pytest.approx(1.0)
    assert abs(float(r.theta(edge, p)) - (p.sh - 2 * p.sv_pi) / (2 * PI)) < p.epsilon


def test_large_tau_disjoint_intervals_split_weights():
    p = _pair(E0=5.0, Epi=5.001, sh=3.0, sv0=0.8, sv_pi=0.9)
    r = wkb.analyze_resonant_large_tau(p)
    assert r.disjoint and r.dos == {"I0": p.epsilon / (2 * PI), "Ipi": p.epsilon / (2 * PI)}
    assert r.I0[1] - r.I0[0] == pytest.approx(2 * p.epsilon * math.exp(-0.8 / p.epsilon) / 0.5)


def test_large_tau_wrong_regime():
    with pytest.raises(WrongRegime):
        wkb.analyze_resonant_large_tau(_pair(sh=1.0))


# ------------------------------------------------------------ resonances, small tau

def test_small_tau_center_is_a_gap():
    p = _pair()
    r = wkb.analyze_resonant_small_tau(p)
    assert len(r.intervals) == 2 and not r.degenerate
    (a1, b1), (a2, b2) = r.intervals
    assert a1 < b1 < p.Ebar < a2 < b2
    assert r.dos == [p.epsilon / (2 * PI)] * 2


def test_sigma_boundary_points_solve_the_equality():
    p = _pair(Epi=5.0 + 1e-6)
    r = wkb.analyze_resonant_small_tau(p)
    for a, b in r.intervals:
        for E in (a, b):
            xi0, xip = float(p.xi(E, 0)), float(p.xi(E, 1))
            t2 = p.tau ** 2
            lhs = abs(t2 * xi0 * xip + 2 * p.lam)
            rhs = 2 + t2 * abs(xi0) + t2 * abs(xip)
            assert abs(lhs - rhs) < 1e-8 * rhs


def test_small_tau_lambda_one_touches():
    r = wkb.analyze_resonant_small_tau(_pair(lam=1.0))
    assert r.degenerate
    assert r.intervals[0][1] == r.intervals[1][0] == 5.0


def test_small_tau_rejects_large_tau_and_lambda_below_one():
    with pytest.raises(WrongRegime):
        wkb.analyze_resonant_small_tau(_pair(sh=3.0))
    with pytest.raises(WrongRegime):
        wkb.analyze_resonant_small_tau(_pair(lam=0.9))


def test_small_tau_scenario_a():
    p = _pair(sh=1.0, sv0=0.8, sv_pi=0.9)
    assert p.log_rho < 0
    r = wkb.analyze_resonant_small_tau(p)
    assert r.scenario == "a"
    # two intervals and the lacuna between them all of order eps sqrt(t_h)
    scale = p.epsilon * math.exp(-p.sh / (2 * p.epsilon))
    (a1, b1), (a2, b2) = r.intervals
    for length in (b1 - a1, a2 - b1, b2 - a2):
        assert 0.1 < length / scale < 10
    assert abs(0.5 * (b1 + a2) - p.Ebar) < 0.1 * (a2 - b1)


def test_small_tau_scenario_b_lyapunov_profile():
    p = _pair(sh=1.0, sv0=0.3, sv_pi=1.0)
    assert p.log_rho == pytest.approx(4.0)
    r = wkb.analyze_resonant_small_tau(p)
    assert r.scenario == "b1"
    (a1, b1), (a2, b2) = r.intervals
    assert b1 < p.E0 < a2
    outer = r.theta(np.array([a1, b2]), p)
    assert np.all(np.abs(outer / (p.epsilon / PI * p.log_rho) - 1) < 0.3)
    inner = r.theta(np.array([b1, a2]), p)
    assert np.all(np.abs(inner) < 1e-3 * p.epsilon)
    # lacuna around E0 of order eps t_h / t_v0
    lac = p.epsilon * math.exp(-(p.sh - p.sv0) / p.epsilon)
    assert 0.1 < (a2 - b1) / lac < 10


def test_small_tau_I_plus_minus_are_inside_sigma():
    p = _pair(sh=1.0, sv0=0.3, sv_pi=1.0)
    r = wkb.analyze_resonant_small_tau(p, c=0.01)
    for ivs, sign in ((r.Iplus, 1), (r.Iminus, -1)):
        for a, b in ivs:
            assert any(lo - 1e-15 <= a and b <= hi + 1e-15 for lo, hi in r.intervals)
            th = r.theta(np.array([a + 0.01 * (b - a), b - 0.01 * (b - a)]), p)
            assert np.all(sign * th >= 0.01 * (1 - 1e-9)) or np.all(sign * th >= -1e-12)


def test_sigma_set_two_components_for_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lam = rng.uniform(1.05, 3)
        x0, xp = rng.normal(0, 2, 2)
        b0, bp = 10 ** rng.uniform(-4, -1, 2)
        comps, _ = wkb.sigma_set(lam, x0, xp, b0, bp)
        assert len(comps) == 2
        mid = 0.5 * (x0 + xp)
        assert not any(a <= mid <= b for a, b in comps) or (x0 - xp) ** 2 / 4 > 2 * lam - 4


# ------------------------------------------------------------ model regime

def test_detect_model_regime_thresholds():
    ok, _ = wkb.detect_model_regime(_pair(sh=1.0, sv0=0.5, sv_pi=0.5 + 1.0 + 2 * 0.05 * 18.4))
    assert not ok
    p = _pair(sh=1.7 - 2 * 0.05 * math.log(2), sv0=0.8, sv_pi=0.9)
    assert p.tau == pytest.approx(1.0)
    ok, params = wkb.detect_model_regime(p)
    assert ok and params["tau"] == pytest.approx(1.0)
    assert params["h"] == pytest.approx(0.05 * ((2 * PI / 0.05) % 1))


def test_model_theta_from_lambda():
    ok, params = wkb.detect_model_regime(_pair(lam=1.25))
    assert params["theta_n"] == 2.0


# ------------------------------------------------------------ full report

def test_report_reference_window(wa2):
    r = wkb.spectral_report(V9, 2.0, 0.05, (5.0, 5.8))
    assert r.pairs == []
    assert all("center" in iv for iv in r.intervals)
    assert r.flags["dos_total"] == pytest.approx(r.flags["dos_expected"])
    assert r.flags["lambda_source"] == "even representative"
    d = json.loads(r.to_json())
    assert d["delta0"] == pytest.approx(r.delta0)
    for iv in r.intervals:
        if iv["kind"] == "typePi":
            assert iv["coarse"][0] <= iv["center"] - iv["halfwidth"]
            assert iv["center"] + iv["halfwidth"] <= iv["coarse"][1]


def test_report_alternation_region_has_both_natures():
    r = wkb.spectral_report(V9, 5.4, 0.01, (5.6, 5.7))
    assert r.flags["alternation"] == {"holds": True, "singular": "type0", "mostly_ac": "typePi"}
    nat = {(iv["kind"], iv.get("nature")) for iv in r.intervals}
    assert ("type0", "singular") in nat and ("typePi", "mostly_ac") in nat
    assert ("type0", "mostly_ac") not in nat and ("typePi", "singular") not in nat


def test_eps_scan_creates_resonances():
    counts = [len(wkb.spectral_report(V9, 5.4, e, (5.6, 5.7)).pairs) for e in np.linspace(0.02, 0.03, 6)]
    assert len(set(counts)) > 1


def test_report_hypothesis_failure_has_margins():
    with pytest.raises(HypothesisError) as exc:
        wkb.spectral_report(V9, 2.0, 0.05, (5.0, 6.0))
    assert exc.value.margins["bei_min_margin"] < 0


def test_resolve_lambda_sources():
    assert wkb.resolve_lambda(V9, 1) == (1.0, "even representative")
    assert wkb.resolve_lambda(V9, 1, 1.3) == (1.3, "argument")
    fg = hill.PeriodicPotential.finite_gap(E9, lambda_n={1: 1.4})
    assert wkb.resolve_lambda(fg, 1) == (1.4, "prescribed")
