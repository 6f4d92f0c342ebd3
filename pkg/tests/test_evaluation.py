import numpy as np
import pytest

from ovad.errors import SingleClassError, ValidationError
from ovad.evaluation import EvalReport, auroc, evaluate, load_report, macro_auroc, micro_auroc


def auroc_oracle(scores, labels):
    """O(n^2) pair counting with half credit for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def random_instance(rng, n=50, tie_prob=0.5):
    scores = rng.normal(size=n)
    if rng.uniform() < tie_prob:
        scores = np.round(scores, 1)  # force tie groups
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return scores, labels


def test_perfect_ranking():
    assert auroc([0.1, 0.9], [0, 1]) == 1.0


def test_all_ties_give_half():
    assert auroc([3.0, 3.0, 3.0, 3.0], [0, 1, 0, 1]) == 0.5


def test_matches_pairwise_oracle():
    rng = np.random.default_rng(181)
    for _ in range(100):
        scores, labels = random_instance(rng)
        assert abs(auroc(scores, labels) - auroc_oracle(scores, labels)) < 1e-12


def test_single_class_raises_dedicated_error():
    with pytest.raises(SingleClassError):
        auroc([0.1, 0.2, 0.3], [0, 0, 0])
    assert issubclass(SingleClassError, ValidationError)


def test_input_validation_is_distinct_from_single_class():
    with pytest.raises(ValidationError, match="non-finite"):
        auroc([0.1, float("nan")], [0, 1])
    with pytest.raises(ValidationError, match="equal-length"):
        auroc([0.1, 0.2], [0, 1, 1])
    with pytest.raises(ValidationError, match="at least 2"):
        auroc([0.1], [1])
    with pytest.raises(ValidationError, match="0 or 1"):
        auroc([0.1, 0.2], [0, 2])


def test_invariance_under_strictly_increasing_transform():
    rng = np.random.default_rng(191)
    scores, labels = random_instance(rng)
    assert auroc(scores, labels) == auroc(np.exp(scores), labels)
    assert auroc(scores, labels) == auroc(3.0 * scores + 10.0, labels)


def test_reflection_identity_for_tie_free_scores():
    rng = np.random.default_rng(193)
    scores = rng.permutation(np.linspace(0, 1, 60))
    labels = rng.integers(0, 2, size=60)
    labels[0], labels[1] = 0, 1
    assert abs(auroc(scores, labels) + auroc(-scores, labels) - 1.0) < 1e-12


def test_micro_single_clip_equals_plain_auroc():
    rng = np.random.default_rng(197)
    scores, labels = random_instance(rng)
    assert micro_auroc({"c": scores}, {"c": labels}) == auroc(scores, labels)


def test_micro_disjoint_ranges_rank_globally():
    scores = {"low": np.array([0.1, 0.2, 0.3]), "high": np.array([5.0, 6.0, 7.0])}
    labels = {"low": np.array([0, 0, 0]), "high": np.array([1, 1, 1])}
    assert micro_auroc(scores, labels) == 1.0


def test_micro_equals_explicit_concatenation():
    rng = np.random.default_rng(199)
    scores, labels = {}, {}
    for i in range(5):
        s, l = random_instance(rng, n=30)
        scores[f"clip{i}"] = s
        labels[f"clip{i}"] = l
    order = sorted(labels)
    concat_s = np.concatenate([scores[c] for c in order])
    concat_l = np.concatenate([labels[c] for c in order])
    assert micro_auroc(scores, labels) == auroc(concat_s, concat_l)


def test_macro_mean_of_per_clip():
    scores = {"a": np.array([0.0, 1.0]), "b": np.array([0.5, 0.5])}
    labels = {"a": np.array([0, 1]), "b": np.array([0, 1])}
    macro, per_clip = macro_auroc(scores, labels)
    assert macro == 0.75
    assert [c.auroc for c in per_clip] == [1.0, 0.5]


def test_macro_skips_single_class_clips():
    scores = {"a": np.array([0.0, 1.0]), "all_normal": np.array([0.2, 0.4])}
    labels = {"a": np.array([0, 1]), "all_normal": np.array([0, 0])}
    macro, per_clip = macro_auroc(scores, labels)
    assert macro == 1.0
    skipped = [c for c in per_clip if c.skipped]
    assert [c.clip_id for c in skipped] == ["all_normal"]
    # micro still includes the all-normal clip's frames
    assert micro_auroc(scores, labels) == auroc([0.0, 1.0, 0.2, 0.4], [0, 1, 0, 0])


def test_macro_matches_independent_per_clip_oracle():
    rng = np.random.default_rng(211)
    scores, labels = {}, {}
    for i in range(6):
        s, l = random_instance(rng, n=25)
        scores[f"c{i}"] = s
        labels[f"c{i}"] = l
    macro, _ = macro_auroc(scores, labels)
    expected = np.mean([auroc_oracle(scores[c], labels[c]) for c in sorted(labels)])
    assert abs(macro - expected) < 1e-12


def test_macro_all_single_class_errors():
    with pytest.raises(SingleClassError):
        macro_auroc({"a": np.array([0.1, 0.2])}, {"a": np.array([0, 0])})


def test_micro_differs_from_macro_but_matches_on_duplicated_clips():
    scores = {"a": np.array([0.0, 1.0, 0.3]), "b": np.array([0.0, 1.0, 0.3])}
    labels = {"a": np.array([0, 1, 0]), "b": np.array([0, 1, 0])}
    micro = micro_auroc(scores, labels)
    macro, _ = macro_auroc(scores, labels)
    assert abs(micro - macro) < 1e-12


def test_missing_coverage_lists_clip_frame_pairs():
    with pytest.raises(ValidationError, match=r"\(c1, 2\)"):
        micro_auroc({"c1": np.array([0.1, 0.2])}, {"c1": np.array([0, 1, 1])})


def test_report_round_trip(tmp_path):
    rng = np.random.default_rng(223)
    scores, labels = {}, {}
    for i in range(3):
        s, l = random_instance(rng, n=20)
        scores[f"c{i}"] = s
        labels[f"c{i}"] = l
    report = evaluate(scores, labels)
    path = tmp_path / "report.json"
    report.save(path)
    back = load_report(path)
    assert back == report
    assert isinstance(back, EvalReport)
    # macro is the mean over non-skipped clips
    vals = [c.auroc for c in back.per_clip if not c.skipped]
    assert abs(back.macro_auroc - np.mean(vals)) < 1e-12
