"""Hand-constructed scoring cases shared by the unit and acceptance tests.

Each case fixes predicted and gold label sequences (integer-encoded per
scheme) together with hand-computed expected scores.  F1 values are exact
fractions written as Python expressions so comparisons can be tight.
"""

import math

# scheme "X":       O=0  B-X=1    I-X=2
# scheme PER/LOC:   O=0  B-PER=1  I-PER=2  B-LOC=3  I-LOC=4

F1_50_100 = 200.0 / 3.0  # harmonic mean of 50 and 100

SPAN_CASES = [
    dict(
        name="identical_single_span",
        types=["X"],
        pred=[[0, 1, 2, 0]],
        gold=[[0, 1, 2, 0]],
        strict=(100.0, 100.0, 100.0),
        relaxed=(100.0, 100.0, 100.0),
        errors=dict(exact_match=1, length_error=0.0),
    ),
    dict(
        name="strict_zero_on_shorter_span",
        types=["X"],
        pred=[[0, 1, 0, 0]],
        gold=[[0, 1, 2, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(100.0, 50.0, F1_50_100),
        errors=dict(partial_match=1, early_finish=1, length_error=1.0),
    ),
    dict(
        name="extra_prediction",
        types=["PER", "LOC"],
        pred=[[1, 2, 0, 0, 0, 3, 0]],
        gold=[[1, 2, 0, 0, 0, 0, 0]],
        strict=(50.0, 100.0, F1_50_100),
        relaxed=(50.0, 100.0, F1_50_100),
        errors=dict(exact_match=1, false_positive=1, length_error=0.0),
    ),
    dict(
        name="no_predictions",
        types=["X"],
        pred=[[0, 0, 0, 0]],
        gold=[[0, 1, 2, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(0.0, 0.0, 0.0),
        errors=dict(missed_span=1),
    ),
    dict(
        name="no_gold_spans",
        types=["X"],
        pred=[[0, 1, 2, 0]],
        gold=[[0, 0, 0, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(0.0, 0.0, 0.0),
        errors=dict(false_positive=1),
    ),
    dict(
        name="half_overlap_equal_lengths",
        types=["X"],
        pred=[[1, 2, 2, 2, 0, 0, 0, 0]],
        gold=[[0, 0, 1, 2, 2, 2, 0, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(50.0, 50.0, 50.0),
        errors=dict(partial_match=1, early_start=1, early_finish=1,
                    length_error=0.0),
    ),
    dict(
        name="wrong_type_exact_boundaries",
        types=["PER", "LOC"],
        pred=[[0, 3, 4, 0]],
        gold=[[0, 1, 2, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(0.0, 0.0, 0.0),
        errors=dict(wrong_type=1, length_error=0.0),
    ),
    dict(
        name="fused_prediction_covers_two_golds",
        types=["X"],
        pred=[[1, 2, 2, 2, 2, 2]],
        gold=[[1, 2, 0, 0, 1, 2]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(100.0 * 4.0 / 6.0, 100.0, 80.0),
        errors=dict(partial_match=1, late_finish=1, fused_spans=1,
                    missed_span=0, false_positive=0, length_error=4.0),
    ),
    dict(
        name="split_gold_into_two_predictions",
        types=["X"],
        pred=[[1, 2, 0, 0, 1, 2]],
        gold=[[1, 2, 2, 2, 2, 2]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(100.0, 100.0 * 4.0 / 6.0, 80.0),
        errors=dict(partial_match=1, early_finish=1, splits=1,
                    missed_span=0, false_positive=0, length_error=4.0),
    ),
    dict(
        name="late_start_early_finish",
        types=["X"],
        pred=[[0, 0, 1, 2, 0, 0]],
        gold=[[0, 1, 2, 2, 2, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(100.0, 50.0, F1_50_100),
        errors=dict(partial_match=1, late_start=1, early_finish=1,
                    length_error=2.0),
    ),
    dict(
        name="early_start_late_finish",
        types=["X"],
        pred=[[0, 1, 2, 2, 2, 0]],
        gold=[[0, 0, 1, 2, 0, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(50.0, 100.0, F1_50_100),
        errors=dict(partial_match=1, early_start=1, late_finish=1,
                    length_error=2.0),
    ),
    dict(
        name="invalid_inside_after_outside",
        types=["X"],
        pred=[[0, 2, 0]],
        gold=[[0, 0, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(0.0, 0.0, 0.0),
        errors=dict(invalid=1, false_positive=1),
    ),
    dict(
        name="aggregation_across_documents",
        types=["X"],
        pred=[[1, 2, 0], [1, 0]],
        gold=[[1, 2, 0], [0, 0]],
        strict=(50.0, 100.0, F1_50_100),
        relaxed=(50.0, 100.0, F1_50_100),
        errors=dict(exact_match=1, false_positive=1, length_error=0.0),
    ),
    dict(
        name="adjacent_begins_split_gold",
        types=["X"],
        pred=[[1, 1]],
        gold=[[1, 2]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(100.0, 100.0, 100.0),
        errors=dict(partial_match=1, early_finish=1, splits=1,
                    length_error=1.0),
    ),
    dict(
        name="wrong_type_partial_overlap",
        types=["PER", "LOC"],
        pred=[[3, 4, 4, 0]],
        gold=[[0, 1, 2, 0]],
        strict=(0.0, 0.0, 0.0),
        relaxed=(0.0, 0.0, 0.0),
        errors=dict(partial_match=1, early_start=1, length_error=1.0),
    ),
    dict(
        name="two_exact_spans",
        types=["X"],
        pred=[[1, 2, 0, 1, 2]],
        gold=[[1, 2, 0, 1, 2]],
        strict=(100.0, 100.0, 100.0),
        relaxed=(100.0, 100.0, 100.0),
        errors=dict(exact_match=2, length_error=0.0),
    ),
]

CEE_CASES = [
    dict(
        name="uniform_two_labels",
        posteriors=[[[0.5, 0.5], [0.5, 0.5]]],
        gold=[[0, 1]],
        expected=math.log(2.0),
    ),
    dict(
        name="one_hot_correct",
        posteriors=[[[1.0, 0.0], [0.0, 1.0]]],
        gold=[[0, 1]],
        expected=0.0,
    ),
    dict(
        name="point_nine_on_gold",
        posteriors=[[[0.9, 0.1], [0.1, 0.9]]],
        gold=[[0, 1]],
        expected=-math.log(0.9),
    ),
    dict(
        name="floored_zero_probability",
        posteriors=[[[0.0, 1.0]]],
        gold=[[0]],
        expected=-math.log(1e-12),
    ),
    dict(
        name="mean_over_tokens",
        posteriors=[[[1.0, 0.0], [0.5, 0.5]]],
        gold=[[0, 0]],
        expected=0.5 * math.log(2.0),
    ),
]
