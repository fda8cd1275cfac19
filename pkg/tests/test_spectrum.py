from __future__ import annotations

from dataclasses import replace

import mpmath
import pytest
from mpmath import mp

from theta_lab.core_eval import theta_jet
from theta_lab.errors import Diverged
from theta_lab.spectrum import (
    PipelineConfig,
    SeedPair,
    SpectralCandidate,
    branch_point_seeds,
    bounded_root_filter,
    certify,
    cluster,
    direct_seeds,
    newton_refine,
    run_pipeline,
)
from theta_lab.trunc_algebra import discriminant_exact, truncation_poly

ROW1 = (mpmath.mpf("0.309249338600"), mpmath.mpf("-7.503255964244"))


@pytest.fixture(autouse=True)
def _dps():
    with mp.workdps(50):
        yield


def test_degree_two_seed_is_quarter():
    seeds = branch_point_seeds(2)
    assert len(seeds) == 1
    assert abs(seeds[0].q - mpmath.mpf(1) / 4) < 1e-25
    assert abs(seeds[0].z + 8) < 1e-20


@pytest.mark.parametrize("q0,z0", [("0.25", "-8"), ("1/3", "-9")])
def test_refine_reaches_first_point(q0, z0):
    q0 = mpmath.mpf(1) / 3 if q0 == "1/3" else mpmath.mpf(q0)
    c = newton_refine(SeedPair(mpmath.mpc(q0), mpmath.mpc(z0), 0, 0), tol=1e-30)
    assert abs(c.q - ROW1[0]) < 1e-11 and abs(c.z - ROW1[1]) < 1e-11
    assert c.residual < 1e-30
    assert c.q.imag == 0 and c.z.imag == 0
    jet = theta_jet(c.q, c.z)
    assert abs(jet.value) < 1e-40 and abs(jet.dz) < 1e-40


def test_refine_guard():
    with pytest.raises(Diverged):
        newton_refine(SeedPair(mpmath.mpc("0.97"), mpmath.mpc(-3), 0, 0))


def test_direct_seeds_are_discriminant_roots():
    disc = discriminant_exact(truncation_poly(6))
    exact = branch_point_seeds(6)
    found = direct_seeds(6, rings=5, spokes=12)
    assert found
    for s in found:
        val = abs(disc.evaluate(s.q))
        scale = mpmath.fsum(abs(int(c)) * abs(s.q) ** k for k, c in enumerate(disc.coeffs))
        assert val <= mpmath.mpf(10) ** -15 * scale
    hits = sum(1 for e in exact if min(abs(e.q - f.q) for f in found) < 1e-12)
    assert hits >= len(exact) // 2


def test_bounded_filter_marks_suspects():
    a = SpectralCandidate(mpmath.mpc("0.5"), mpmath.mpc(3), mpmath.mpf(0))
    b = SpectralCandidate(mpmath.mpc("0.6"), mpmath.mpc(300), mpmath.mpf(0))
    suspects: list = []
    kept = bounded_root_filter([a, b], R=25, suspects=suspects)
    assert kept == [a]
    assert len(suspects) == 1 and suspects[0].caustic_suspect


def test_cluster_merges_and_orders():
    s1, s2 = SeedPair(0, 0, 8, 0), SeedPair(0, 0, 10, 3)
    c1 = SpectralCandidate(mpmath.mpc("0.6", "0.1"), mpmath.mpc(1), mpmath.mpf("1e-40"), (s1,))
    c2 = SpectralCandidate(mpmath.mpc("0.6", "0.1") + 1e-12, mpmath.mpc(1), mpmath.mpf("1e-45"), (s2,))
    c3 = SpectralCandidate(mpmath.mpc("0.3"), mpmath.mpc(2), mpmath.mpf("1e-40"), (s1,))
    out = cluster([c1, c3, c2], eps=1e-8)
    assert len(out) == 2
    assert out[0].q == c3.q and out[0].cluster_id == 0
    assert out[1].residual == mpmath.mpf("1e-45")
    assert {s.degree for s in out[1].sources} == {8, 10}


def test_certificate_for_first_point_and_corrupted_copy():
    c = newton_refine(SeedPair(mpmath.mpc("0.25"), mpmath.mpc(-8), 0, 0), tol=1e-30)
    cert = certify(c)
    assert cert.certified
    assert cert.rho < 1e-30
    assert cert.rho_unique >= cert.rho
    bad = replace(c, z=c.z * 10**6, residual=theta_jet(c.q, c.z * 10**6).residual())
    assert not certify(bad).certified


def test_pipeline_low_degree():
    res = run_pipeline(PipelineConfig(degrees=(2,)))
    assert len(res.candidates) == 1
    c = res.candidates[0]
    assert abs(c.q - ROW1[0]) < 1e-11 and c.certified


def test_pipeline_small_retain():
    res = run_pipeline(PipelineConfig(degrees=(8, 10), retain=0.5))
    assert len(res.candidates) == 3
    assert all(c.certified for c in res.candidates)
    assert abs(res.candidates[1].q - mpmath.conj(res.candidates[2].q)) < 1e-40
