import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from ddlab import ChannelRealization, DDFrame, FrameDims, bpsk, build_effective_channel_otfs, qam, random_channel
from ddlab.analysis import (
    PairSpectrum,
    doppler_major_permutation,
    bep_union_bound,
    bound_report,
    difference_census,
    diversity_order,
    otfs_alternate_form,
    pair_spectrum,
    pep_high_snr,
    pep_upper,
    rank1_census,
    rank1_lower_bound,
    read_bound_report,
    union_bound_terms,
    write_bound_report,
)
from ddlab.constellation import Constellation
from ddlab.effective import build_phi_vector
from ddlab.errors import DomainError, InfeasibleError, ParameterError

from oracles import naive_pair_sums, rayleigh_pep_mc

C4 = qam(4)
FULL4 = ChannelRealization.from_paths([(0.5, 0, 0), (0.5, 0, 1), (0.5, 1, 0), (0.5, 1, 1)])


def _frame(v, dims, c=C4):
    return DDFrame.from_vector(np.asarray(v, dtype=complex), dims, c)


def test_constant_difference_singular_value():
    dims = FrameDims(2, 2)
    a = C4.points[0]
    s = pair_spectrum(_frame([a] * 4, dims), _frame([-a] * 4, dims), FULL4)
    assert s.rank == 1
    assert abs(s.singular_values[0] / np.sqrt(4 * 4 * 4) - 1) < 1e-9
    assert s.bit_distance == 8


def test_identical_frames_rejected():
    dims = FrameDims(2, 2)
    x = _frame(C4.points[[0, 1, 2, 3]], dims)
    with pytest.raises(DomainError):
        pair_spectrum(x, x, FULL4)


def test_single_symbol_difference_matches_dense_svd(rng):
    dims = FrameDims(4, 4)
    for model in ("ideal", "exact"):
        ch = random_channel(3, dims, rng)
        idx = rng.integers(0, 4, 16)
        idx2 = idx.copy()
        idx2[5] = (idx2[5] + 1) % 4
        x, xh = _frame(C4.points[idx], dims), _frame(C4.points[idx2], dims)
        s = pair_spectrum(x, xh, ch, model)
        dense = build_phi_vector(x.vector, ch, dims, model) - build_phi_vector(xh.vector, ch, dims, model)
        ref = np.linalg.svd(dense, compute_uv=False)
        assert np.allclose(s.singular_values, ref, atol=1e-12)
        # distinct taps put the shifted copies on distinct positions
        assert s.rank == 3


def test_spectrum_phase_and_scale(rng):
    dims = FrameDims(2, 4)
    ch = random_channel(4, dims, rng)
    x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    xh = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    base = pair_spectrum(DDFrame.from_vector(x, dims), DDFrame.from_vector(xh, dims), ch)
    rot = np.exp(0.7j)
    s = pair_spectrum(DDFrame.from_vector(rot * x, dims), DDFrame.from_vector(rot * xh, dims), ch)
    assert np.allclose(s.singular_values, base.singular_values)
    s = pair_spectrum(DDFrame.from_vector(2.5 * x, dims), DDFrame.from_vector(2.5 * xh, dims), ch)
    assert np.allclose(s.singular_values, 2.5 * base.singular_values)
    assert s.rank == base.rank
    assert base.bit_distance is None
    assert np.all(np.diff(base.singular_values) <= 0)


def test_pep_upper_limits():
    s = PairSpectrum(np.array([np.sqrt(4 * 4 * 4)]), 1)
    for g in (0.1, 1.0, 100.0):
        assert np.isclose(pep_upper(s, g, 4), 1 / (1 + g * 4))
    assert pep_upper(s, 1e-12, 4) > 1 - 1e-9
    with pytest.raises(ParameterError):
        pep_upper(s, 0.0, 4)


def test_pep_upper_dominates_monte_carlo(rng):
    for _ in range(20):
        P = int(rng.integers(1, 5))
        r = int(rng.integers(1, P + 1))
        lam = np.sort(rng.uniform(0.2, 4.0, r))[::-1]
        s = PairSpectrum(np.r_[lam, np.zeros(P - r)], r)
        g = 10 ** rng.uniform(-0.5, 2)
        mc = rayleigh_pep_mc(lam**2, g, P, 100000, rng)
        assert pep_upper(s, g, P) >= mc


def test_high_snr_forms():
    s = PairSpectrum(np.array([3.0, 2.0, 0.0]), 2)
    g = np.array([1e4, 1e6])
    assert np.allclose(pep_high_snr(s, g, 3) / pep_upper(s, g, 3), 1, rtol=1e-3)
    # the two printed forms differ by a factor P^(1-r)
    assert np.allclose(pep_high_snr(s, g, 3, "p_scaled") / pep_high_snr(s, g, 3, "limit"), 3.0 ** (1 - 2))
    with pytest.raises(ParameterError):
        pep_high_snr(s, g, 3, "other")


def _phi_fn(ch, dims, model):
    return lambda d: build_phi_vector(d, ch, dims, model)


@pytest.mark.parametrize(
    "c, dims, taps, model",
    [
        (bpsk(), FrameDims(2, 2), [(0, 0), (0, 1), (1, 0), (1, 1)], "ideal"),
        (bpsk(), FrameDims(2, 2), [(0, 0), (1, 1)], "exact"),
        (C4, FrameDims(1, 2), [(0, 0), (0, 1)], "ideal"),
        (C4, FrameDims(2, 1), [(0, 0), (1, 0)], "exact"),
    ],
)
def test_census_matches_ordered_pair_enumeration(c, dims, taps, model):
    ch = ChannelRealization.from_paths([(1 / np.sqrt(len(taps)), l, k) for l, k in taps])
    g = 30.0
    kappa, rmin, total, const = naive_pair_sums(c.points, c.labels, _phi_fn(ch, dims, model), dims.size, g, ch.P)
    assert rank1_census(c, dims, ch, model, "full").kappa == kappa
    assert diversity_order(c, dims, ch, model, "full").rho == rmin
    cen = difference_census(c, dims, ch, model, "full")
    assert np.isclose(union_bound_terms(cen, g, ch.P).sum(), total, rtol=1e-10)
    assert np.isclose(cen.pairs.sum(), c.order**dims.size * (c.order**dims.size - 1))
    fam = difference_census(c, dims, ch, model, "family")
    nconst = len(fam.alphabet.values) - 1
    assert np.isclose(fam.pairs[:nconst].sum(), const)


def test_family_search_equals_full_on_bpsk():
    dims = FrameDims(2, 2)
    full = diversity_order(bpsk(), dims, FULL4, mode="full")
    fam = diversity_order(bpsk(), dims, FULL4, mode="family")
    assert full.rho == fam.rho == 1
    assert (full.mode, fam.mode) == ("full", "family")


def test_diversity_witness_is_constant_difference():
    rho, (x, xh), mode = diversity_order(C4, FrameDims(2, 2), FULL4)
    assert rho == 1 and mode == "full"
    d = x.vector - xh.vector
    assert np.allclose(d, d[0]) and abs(d[0]) > 0
    assert pair_spectrum(x, xh, FULL4).rank == 1


def test_single_path_every_pair_rank_one():
    dims = FrameDims(2, 2)
    ch = ChannelRealization.from_paths([(1.0, 1, 1)])
    assert diversity_order(C4, dims, ch).rho == 1
    assert rank1_census(C4, dims, ch).kappa == 256 * 255


def test_kappa_ignores_labeling():
    dims = FrameDims(2, 2)
    perm = np.array([2, 0, 3, 1])
    relabeled = Constellation(C4.points[perm], "4QAM-perm")
    assert rank1_census(relabeled, dims, FULL4).kappa == rank1_census(C4, dims, FULL4).kappa == 272


def test_census_cap():
    with pytest.raises(InfeasibleError):
        difference_census(C4, FrameDims(4, 4), FULL4, mode="full")
    assert rank1_census(C4, FrameDims(4, 4), FULL4).mode == "family"


def test_ranks_within_limits():
    cen = difference_census(C4, FrameDims(2, 2), FULL4)
    assert np.all(cen.ranks >= 1) and np.all(cen.ranks <= 4)


def test_min_rank_terms_dominate_at_high_snr():
    cen = difference_census(C4, FrameDims(2, 2), FULL4)
    terms = union_bound_terms(cen, 1e4, 4)[0]
    sub = terms[cen.ranks == cen.ranks.min()].sum()
    assert abs(terms.sum() / sub - 1) < 0.1


def test_bpsk_single_pair_by_hand():
    dims = FrameDims(1, 1)
    ch = ChannelRealization.from_paths([(1.0, 0, 0)])
    cen = difference_census(bpsk(), dims, ch)
    g = 10.0
    # two ordered pairs, each d_b = 1, lam^2 = 4: (1/2) * 2 * (1/4) * (g/4)^-1
    assert np.isclose(bep_union_bound(cen, g, 1)[0], 0.5 * 2 * 0.25 * 4 / g)


def test_union_bound_slope_and_monotone():
    cen = difference_census(C4, FrameDims(2, 2), FULL4)
    g = 10 ** np.linspace(4, 6, 5)
    ub = bep_union_bound(cen, g, 4)
    slope = np.polyfit(np.log10(g), np.log10(ub), 1)[0]
    assert abs(slope + 1) < 0.01
    full = bep_union_bound(cen, 10 ** np.linspace(-1, 6, 30), 4, clip=np.inf)
    assert np.all(np.diff(full) < 0)


def test_union_bound_sampled_close_to_full():
    dims = FrameDims(2, 2)
    full = bound_report(C4, dims, FULL4, [10, 20, 30], mode="full")
    samp = bound_report(C4, dims, FULL4, [10, 20, 30], mode="sampled", samples=40000, seed=3)
    assert samp.meta["enumeration_mode"] == "sampled"
    assert np.allclose(samp.union_upper, full.union_upper, rtol=0.25)


def test_rank1_lower_bound_limits():
    dims = FrameDims(2, 2)
    kappa = 272
    g = 10 ** np.linspace(-3, 6, 50)
    ex, asym = rank1_lower_bound(kappa, dims, C4, g)
    assert np.all(np.diff(ex) < 0) and np.all(np.diff(asym) < 0)
    big = g >= 1e3 / dims.size
    assert np.all(np.abs(ex[big] / asym[big] - 1) < 0.01)
    assert np.all(ex <= kappa / (2 * 256))
    tiny, _ = rank1_lower_bound(kappa, dims, C4, 1e-9)
    assert np.isclose(tiny, kappa / (2 * 256), rtol=1e-3)
    top = g[-10:]
    slope = np.polyfit(np.log10(top), np.log10(ex[-10:]), 1)[0]
    assert abs(slope + 1) < 0.05


def test_frame_size_lowers_bound():
    vals = []
    for d in (FrameDims(2, 2), FrameDims(2, 4), FrameDims(4, 4)):
        k = rank1_census(C4, d, FULL4, mode="family").kappa
        vals.append(rank1_lower_bound(k, d, C4, 10.0)[0])
    assert vals[0] > vals[1] > vals[2]


def test_report_round_trip(tmp_path):
    rep = bound_report(C4, FrameDims(2, 2), FULL4, [0, 10, 20])
    assert rep.kappa == 272 and rep.diversity_order == 1
    for arr in (rep.union_upper, rep.rank1_lower_exact, rep.rank1_lower_asymptotic):
        assert np.all((arr >= 0) & (arr <= 0.5))
    csv_path, side = write_bound_report(rep, tmp_path / "bounds.csv")
    back = read_bound_report(csv_path)
    assert np.array_equal(back.union_upper, rep.union_upper)
    assert back.kappa == 272 and back.meta["form"] == "limit"
    head = csv_path.read_text().splitlines()
    assert head[1] == "gamma_dB,upper,lower_exact,lower_asymptotic"
    with pytest.raises(ParameterError):
        bound_report(C4, FrameDims(2, 2), FULL4, [0], mode="family")


def test_exact_model_census_differs():
    # Under the matched-filter relation the taps' phase ramps break the
    # constant-difference rank deficiency at this size.
    assert rank1_census(C4, FrameDims(2, 2), FULL4, model="exact").kappa == 0
    assert diversity_order(C4, FrameDims(2, 2), FULL4, model="exact").rho == 2


def test_doppler_major_permutation_is_bijection():
    dims = FrameDims(3, 5)
    p = doppler_major_permutation(dims)
    assert np.array_equal(np.sort(p), np.arange(15))
    assert p[1] == 3  # i = 1 is (l=0, k=1), which is q = 0 + 3 * 1


@pytest.mark.parametrize("model", ["exact", "ideal"])
def test_alternate_form_matches_otfs_builder(rng, model):
    for _ in range(50):
        dims = FrameDims(*rng.integers(1, 7, 2))
        P = int(rng.integers(1, min(4, dims.size) + 1))
        ch = random_channel(P, dims, rng)
        x = DDFrame.from_vector(rng.standard_normal(dims.size) + 1j * rng.standard_normal(dims.size), dims)
        hp, X = otfs_alternate_form(x, ch, model)
        y = build_effective_channel_otfs(ch, dims, model).matrix @ x.vector
        assert np.max(np.abs(hp @ X - y[doppler_major_permutation(dims)])) < 1e-10


def test_alternate_form_trivial_path(rng):
    dims = FrameDims(2, 3)
    ch = ChannelRealization.from_paths([(0.3 - 0.1j, 0, 0)])
    x = DDFrame.from_vector(rng.standard_normal(6) + 0j, dims)
    hp, X = otfs_alternate_form(x, ch)
    assert np.allclose(X[0], x.vector[doppler_major_permutation(dims)])
    assert np.allclose(hp, ch.gains)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_alternate_form_constant_pair_rank_one(ia, ib, seed):
    if ia == ib:
        return
    rng = np.random.default_rng(seed)
    dims = FrameDims(2, 4)
    ch = random_channel(int(rng.integers(2, 6)), dims, rng)
    a, b = C4.points[ia], C4.points[ib]
    _, Xa = otfs_alternate_form(_frame([a] * 8, dims), ch, "ideal")
    _, Xb = otfs_alternate_form(_frame([b] * 8, dims), ch, "ideal")
    assert np.allclose(Xa - Xb, a - b)
    s = np.linalg.svd(Xa - Xb, compute_uv=False)
    assert np.sum(s > 1e-9 * s[0]) == 1
