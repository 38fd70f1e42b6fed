import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefcal.datamodel import BeliefRecord, Design, EstimateResult, rank_transform, validate_dataset
from beliefcal.errors import (
    DuplicateId,
    EmptyDataset,
    InconsistentField,
    MissingField,
    NonFinite,
    ValidationError,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_two_active_records():
    ds = validate_dataset(
        [
            dict(id="a", arm="A", prior=1.0, posterior=2.0, signal=3.0, outcome_post=1.0),
            dict(id="b", arm="B", prior=1.0, posterior=0.5, signal=0.0, outcome_post=0.0),
        ],
        "active",
    )
    assert ds.n == 2
    assert ds.treat.tolist() == [1.0, 0.0]
    assert ds.delta_x.tolist() == [1.0, -0.5]


def test_passive_control_with_signal_rejected():
    with pytest.raises(MissingField) as exc:
        validate_dataset(
            [dict(id="c1", arm="B", prior=1.0, posterior=1.0, signal=2.0, outcome_post=0.0)],
            "passive",
        )
    assert exc.value.record_id == "c1"
    assert exc.value.field == "signal"


def test_passive_treated_needs_signal():
    with pytest.raises(MissingField):
        validate_dataset(
            [dict(id="t", arm="A", prior=1.0, posterior=1.5, outcome_post=0.0)], "passive"
        )


def test_panel_needs_outcome_pre():
    with pytest.raises(MissingField) as exc:
        validate_dataset([dict(id="p", prior=0.0, posterior=1.0, outcome_post=2.0)], "panel")
    assert exc.value.field == "outcome_pre"


def test_active_signal_must_match_potential_signal():
    with pytest.raises(InconsistentField):
        validate_dataset(
            [dict(id="a", arm="A", prior=0.0, posterior=1.0, signal=2.0, signal_high=3.0,
                  outcome_post=0.0)],
            "active",
        )


def test_duplicate_and_empty():
    rec = dict(id="x", prior=0.0, posterior=0.0, outcome_pre=0.0, outcome_post=0.0)
    with pytest.raises(DuplicateId):
        validate_dataset([rec, dict(rec)], "panel")
    with pytest.raises(EmptyDataset):
        validate_dataset([], "panel")


def test_negative_prior_var_and_nonfinite():
    base = dict(id="x", prior=0.0, posterior=0.0, outcome_pre=0.0, outcome_post=0.0)
    with pytest.raises(InconsistentField):
        validate_dataset([dict(base, prior_var=-1.0)], "panel")
    with pytest.raises(NonFinite):
        validate_dataset([dict(base, outcome_post=float("inf"))], "panel")


def test_covariate_schema_shared():
    a = dict(id="a", prior=0.0, posterior=0.0, outcome_pre=0.0, outcome_post=0.0,
             covariates={"w": 1.0})
    b = dict(id="b", prior=0.0, posterior=1.0, outcome_pre=0.0, outcome_post=0.0,
             covariates={"v": 1.0})
    with pytest.raises(ValidationError):
        validate_dataset([a, b], "panel")


def test_exposure_definitions():
    act = validate_dataset(
        [dict(id="a", arm="A", prior=1.0, posterior=2.0, signal=3.0, signal_high=3.0,
              signal_low=-1.0, outcome_post=0.0)],
        "active",
    )
    assert act.exposure.tolist() == [4.0]
    pas = validate_dataset(
        [dict(id="a", arm="B", prior=1.0, posterior=1.0, signal_high=3.5, outcome_post=0.0)],
        "passive",
    )
    assert pas.exposure.tolist() == [2.5]


def test_design_parse():
    assert Design.parse("Passive") is Design.PASSIVE
    with pytest.raises(ValidationError):
        Design.parse("crossover")


def test_estimate_result_contract():
    with pytest.raises(ValueError):
        EstimateResult("x", 1.0, n_total=1, n_used=2)
    with pytest.raises(ValueError):
        EstimateResult("x", 1.0, se=-1.0)
    r = EstimateResult("x", 1.0, n_total=3, n_used=2).with_se(0.5, 7)
    assert r.as_dict()["se"] == 0.5 and r.seed == 7


def test_rank_examples():
    np.testing.assert_allclose(rank_transform([10, 20, 30]), [1 / 3, 2 / 3, 1])
    # tied pair shares average position (1 + 2) / 2, divided by n = 3
    np.testing.assert_allclose(rank_transform([5, 5, 9]), [0.5, 0.5, 1.0])
    np.testing.assert_allclose(rank_transform([7]), [1.0])


def test_rank_rejects_nonfinite():
    with pytest.raises(NonFinite):
        rank_transform([1.0, np.nan])


def test_weighted_rank_unit_weights_match():
    v = [3.0, 1.0, 3.0, 2.0, 5.0]
    np.testing.assert_allclose(rank_transform(v, np.ones(5)), rank_transform(v))


def test_weighted_rank_hand_value():
    # tie block of weight 4 (two records) below a record of weight 1
    np.testing.assert_allclose(rank_transform([5, 5, 9], [1, 3, 1]), [0.6, 0.6, 1.0])


@given(st.lists(st.integers(-10_000, 10_000), min_size=1, max_size=40))
def test_rank_invariant_to_increasing_maps(values):
    # maps chosen to be exact in floating point so ties are preserved
    v = np.asarray(values, dtype=float)
    base = rank_transform(v)
    np.testing.assert_array_equal(rank_transform(2.0 * v), base)
    np.testing.assert_array_equal(rank_transform(v**3 + 5.0), base)
    assert np.all((base > 0) & (base <= 1))


@given(st.lists(finite, min_size=1, max_size=40), st.randoms())
def test_rank_permutation_equivariant(values, rnd):
    v = np.asarray(values)
    perm = list(range(v.size))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(rank_transform(v[perm]), rank_transform(v)[perm])


record_strategy = st.builds(
    lambda x0, dx, y0, y1: dict(prior=x0, posterior=x0 + dx, outcome_pre=y0, outcome_post=y1),
    finite, finite, finite, finite,
)


@given(st.lists(record_strategy, min_size=1, max_size=15))
def test_validation_idempotent_and_delta_exact(raws):
    recs = [dict(r, id=f"i{k}") for k, r in enumerate(raws)]
    ds = validate_dataset(recs, "panel")
    again = validate_dataset(ds.records, "panel")
    assert again.records == ds.records
    assert again.derived == ds.derived
    for rec, d in zip(ds.records, ds.derived):
        assert d.delta_x == rec.posterior - rec.prior


def test_records_are_frozen():
    rec = BeliefRecord(id="a", prior=0.0, posterior=1.0, outcome_post=0.0)
    with pytest.raises(AttributeError):
        rec.prior = 3.0
