import itertools

import pytest
from hypothesis import given, strategies as st

from risktext import labels
from risktext.errors import ValidationError
from risktext.labels import LABELS, SurveyResponse, derive_labels, labels_from_answers, score_audit_c


def test_audit_c_minimum_and_maximum():
    assert score_audit_c(1, 1, 1) == 0
    assert score_audit_c(5, 5, 5) == 12


def test_audit_c_hand_sum():
    # 2-3 times a week, 5-6 drinks, monthly
    assert score_audit_c(4, 3, 3) == 7


@pytest.mark.parametrize("args,name", [((0, 1, 1), "auditc_q1"), ((1, 6, 1), "auditc_q2"), ((1, 1, 9), "auditc_q3")])
def test_audit_c_out_of_range_names_question(args, name):
    with pytest.raises(ValidationError, match=name):
        score_audit_c(*args)


def test_audit_c_monotone_and_bounded():
    grid = list(itertools.product(range(1, 6), repeat=3))
    for q in grid:
        s = score_audit_c(*q)
        assert 0 <= s <= 12
        for i in range(3):
            if q[i] < 5:
                bumped = list(q)
                bumped[i] += 1
                assert score_audit_c(*bumped) >= s


def test_threshold_boundary():
    five = labels_from_answers("u", {"auditc_q1": 3, "auditc_q2": 3, "auditc_q3": 2})
    six = labels_from_answers("u", {"auditc_q1": 3, "auditc_q2": 3, "auditc_q3": 3})
    assert (five.auditc_score, five.auditc_high) == (5, 0)
    assert (six.auditc_score, six.auditc_high) == (6, 1)


def test_partner_six_to_ten_is_positive():
    assert labels_from_answers("u", {"partners_3mo": 2}).over5_partners == 1
    assert labels_from_answers("u", {"partners_3mo": 1}).over5_partners == 1
    assert labels_from_answers("u", {"partners_3mo": 3}).over5_partners == 0
    assert labels_from_answers("u", {"partners_3mo": 4}).over5_partners == 0


def test_all_declines_exclude_all_labels():
    ls = labels_from_answers("u", {"auditc_q1": 6, "auditc_q2": 6, "auditc_q3": 6, "partners_3mo": 5,
                                   "takes_prep": 3})
    assert all(ls.get(name) is None for name in LABELS)


def test_low_score_but_monthly_binge():
    ls = labels_from_answers("u", {"auditc_q1": 1, "auditc_q2": 1, "auditc_q3": 3})
    assert ls.auditc_score == 2
    assert ls.auditc_high == 0
    assert ls.binge_monthly == 1


def test_binge_ladder():
    expected = {1: 0, 2: 0, 3: 1, 4: 1, 5: 1, 6: None}
    for idx, want in expected.items():
        assert labels_from_answers("u", {"auditc_q3": idx}).binge_monthly == want


def test_prep_yes_no_decline():
    assert [labels_from_answers("u", {"takes_prep": i}).takes_prep for i in (1, 2, 3)] == [1, 0, None]


def test_missing_answers_exclude():
    ls = labels_from_answers("u", {})
    assert all(ls.get(name) is None for name in LABELS)


def test_label_independence():
    full = {"auditc_q1": 4, "auditc_q2": 3, "auditc_q3": 3, "partners_3mo": 1, "takes_prep": 1}
    base = labels_from_answers("u", full)
    for qid, decline in (("partners_3mo", 5), ("takes_prep", 3)):
        other = labels_from_answers("u", {**full, qid: decline})
        changed = [n for n in LABELS if other.get(n) != base.get(n)]
        assert changed == ["over5_partners" if qid == "partners_3mo" else "takes_prep"]
    # declining q1 only removes the score-based label
    other = labels_from_answers("u", {**full, "auditc_q1": 6})
    assert other.binge_monthly == base.binge_monthly and other.auditc_high is None


def test_conflicting_duplicates_name_the_user():
    rs = [SurveyResponse("alice", "takes_prep", 1), SurveyResponse("alice", "takes_prep", 2),
          SurveyResponse("bob", "takes_prep", 1), SurveyResponse("bob", "takes_prep", 1)]
    with pytest.raises(ValidationError, match="alice") as info:
        derive_labels(rs)
    assert "bob" not in str(info.value)


def test_response_index_validated():
    with pytest.raises(ValidationError):
        SurveyResponse("u", "takes_prep", 4)
    with pytest.raises(ValidationError):
        SurveyResponse("u", "nope", 1)


def test_rare_outcome_questions_are_stored():
    ls = derive_labels([SurveyResponse("u", "inject_meth_3mo", 2)])["u"]
    assert ls.answers == {"inject_meth_3mo": 2}


def test_csv_round_trip(tmp_path):
    rs = [SurveyResponse("u1", "auditc_q1", 5), SurveyResponse("u1", "auditc_q2", 5),
          SurveyResponse("u1", "auditc_q3", 5), SurveyResponse("u2", "takes_prep", 3)]
    labels.write_survey_csv(tmp_path / "s.csv", rs)
    assert labels.read_survey_csv(tmp_path / "s.csv") == rs
    derived = derive_labels(rs)
    labels.write_labels_csv(tmp_path / "l.csv", derived)
    text = (tmp_path / "l.csv").read_text().splitlines()
    assert text[0] == "user_id,binge_monthly,auditc_high,over5_partners,takes_prep"
    assert text[1] == "u1,1,1,NA,NA"
    assert text[2] == "u2,NA,NA,NA,NA"
    back = labels.read_labels_csv(tmp_path / "l.csv")
    assert {u: [b.get(n) for n in LABELS] for u, b in back.items()} == \
        {u: [b.get(n) for n in LABELS] for u, b in derived.items()}


def test_survey_csv_blank_answer_is_missing(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("user_id,question_id,answer_index\nu1,takes_prep,\nu1,partners_3mo,NA\nu1,auditc_q3,4\n")
    rs = labels.read_survey_csv(p)
    assert rs == [SurveyResponse("u1", "auditc_q3", 4)]


def test_survey_csv_rejects_bad_index(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("user_id,question_id,answer_index\nu1,takes_prep,yes\n")
    with pytest.raises(ValidationError, match=":2"):
        labels.read_survey_csv(p)


@given(st.dictionaries(st.sampled_from(sorted(labels.QUESTIONS)), st.integers(1, 6)))
def test_labels_are_tristate(answers):
    answers = {q: min(i, labels.QUESTIONS[q].n_options) for q, i in answers.items()}
    ls = labels_from_answers("u", answers)
    for name in LABELS:
        assert ls.get(name) in (0, 1, None)
