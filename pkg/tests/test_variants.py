import pytest
from hypothesis import given, strategies as st

from varpar import Family, InvalidArgumentError, audit, build_baseline, build_variant, catalog_table
from varpar.variants import LayerKind, round_filters

# (params, MACs) per index, read off the published catalog table.
STANDARD_101 = {1: (320e3, 10e6), 2: (330e3, 17e6), 3: (340e3, 27e6), 4: (360e3, 40e6),
                5: (370e3, 54e6), 6: (390e3, 71e6), 7: (410e3, 112e6)}
IMAGENET_1000 = {1: (1.15e6, 17e6), 2: (1.3e6, 30e6), 3: (1.45e6, 47e6), 4: (1.59e6, 69e6),
                 5: (1.75e6, 95e6), 6: (1.9e6, 125e6), 7: (1.97e6, 196e6)}


def within(actual, expected, tol=0.10):
    return abs(actual - expected) <= tol * expected


@pytest.mark.parametrize("family,classes,table", [("standard", 101, STANDARD_101), ("imagenet", 1000, IMAGENET_1000)])
def test_catalog_matches_published_counts(family, classes, table):
    for spec, a in catalog_table(family, classes):
        params, macs = table[spec.index_i]
        assert within(a.param_count, params), (spec.name, a.param_count, params)
        assert within(a.mac_count, macs), (spec.name, a.mac_count, macs)


def test_baseline_counts():
    assert within(audit(build_baseline(num_classes=101)).mac_count, 300e6)
    assert within(audit(build_baseline(num_classes=101)).param_count, 2.27e6)
    assert within(audit(build_baseline(num_classes=1000)).param_count, 3.47e6)


def _hand_tally(res, classes, last):
    # Width-0.35 channels written out by hand: stem 16, then 8, 8, 16, 24, 32, 56, 112.
    blocks = [(16, 8, 1, 1)]
    for t, c, n, s in [(6, 8, 2, 2), (6, 16, 3, 2), (6, 24, 4, 2), (6, 32, 3, 1), (6, 56, 3, 2), (6, 112, 1, 1)]:
        blocks += [(None, c, t, s)] + [(None, c, t, 1)] * (n - 1)
    side = res // 2
    params = 3 * 3 * 3 * 16 + 2 * 16
    macs = side * side * 3 * 3 * 3 * 16
    cin = 16
    for _, cout, t, s in blocks:
        hid = cin * t
        if t > 1:
            params += cin * hid + 2 * hid
            macs += side * side * cin * hid
        side = -(-side // s)
        params += 9 * hid + 2 * hid + hid * cout + 2 * cout
        macs += side * side * (9 * hid + hid * cout)
        cin = cout
    params += cin * last + 2 * last
    macs += side * side * cin * last
    params += last * classes + classes
    macs += last * classes
    return params, macs


@pytest.mark.parametrize("i", range(1, 8))
def test_counts_match_hand_tally(i):
    a = audit(build_variant(i, "standard", 101))
    assert (a.param_count, a.mac_count) == _hand_tally(96 + 32 * (i - 1) if i < 7 else 320, 101, 64 * (3 + i))


def test_descriptor_fields():
    v = build_variant(1, Family.STANDARD, 101)
    assert (v.input_resolution_rho, v.width_factor_d, v.head_width_j, v.num_classes_C) == (96, 0.35, 4, 101)
    assert v.name == "V1" and v.variant_id == 1
    vim = build_variant(7, Family.IMAGENET, 1000)
    assert (vim.input_resolution_rho, vim.width_factor_d, vim.head_width_j) == (320, 0.5, 20)
    assert vim.last_pointwise_filters == 1280
    assert build_variant(5, "imagenet", 1000).head_width_j == 17


def test_catalog_rows_sorted():
    rows = catalog_table("standard", 101)
    assert [s.index_i for s, _ in rows] == list(range(1, 8))
    assert [s.input_resolution_rho for s, _ in rows] == [96, 128, 160, 192, 224, 256, 320]
    assert all(s.width_factor_d == 0.5 for s, _ in catalog_table("imagenet", 1000))


def test_head_shrinks_with_classes():
    for (s2, a2), (s101, a101) in zip(catalog_table("standard", 2), catalog_table("standard", 101)):
        assert a2.param_count < a101.param_count
        assert s2.layers[-1].kind is LayerKind.HEAD_CONV and s2.layers[-1].out_filters == 2


@pytest.mark.parametrize("family,classes", [("standard", 101), ("standard", 10), ("imagenet", 1000)])
def test_monotone_in_index(family, classes):
    audits = [a for _, a in catalog_table(family, classes)]
    for lo, hi in zip(audits, audits[1:]):
        assert hi.param_count > lo.param_count
        assert hi.mac_count > lo.mac_count
    assert all(a.mac_count >= a.param_count > 0 for a in audits)


@given(st.integers(1, 7), st.sampled_from(list(Family)), st.integers(2, 2000))
def test_last_pointwise_divisible_by_64(i, family, classes):
    assert build_variant(i, family, classes).last_pointwise_filters % 64 == 0


@given(st.integers(1, 7), st.integers(2, 300))
def test_build_is_pure(i, classes):
    assert build_variant(i, "standard", classes) == build_variant(i, "standard", classes)


@pytest.mark.parametrize("i", range(1, 8))
def test_width_doubling_never_shrinks_filters(i):
    narrow = build_variant(i, "standard", 101, width_factor=0.35)
    wide = build_variant(i, "standard", 101, width_factor=0.7)
    assert all(w.out_filters >= n.out_filters for n, w in zip(narrow.layers, wide.layers))
    assert audit(wide).param_count > 2 * (audit(narrow).param_count - 101 * narrow.last_pointwise_filters)


def test_round_filters_rule():
    assert round_filters(32, 0.35) == 16
    assert round_filters(16, 0.35) == 8
    assert round_filters(320, 0.35) == 112
    assert round_filters(1, 0.1) == 8


@pytest.mark.parametrize("bad", [0, 8, -1])
def test_bad_index(bad):
    with pytest.raises(InvalidArgumentError):
        build_variant(bad)


def test_bad_classes():
    with pytest.raises(InvalidArgumentError):
        build_variant(1, "standard", 1)
