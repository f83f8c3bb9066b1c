from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from choixgrade.data.dataset import ClassLabel
from choixgrade.data.imaging import write_pgm
from choixgrade.errors import KeyFormatError
from choixgrade.grade import (OPTIONS, GradeReport, Verdict, grade, judge, parse_answer_key,
                              read_answer_key)


# -- answer keys --------------------------------------------------------------

def test_parse_key():
    key = parse_answer_key("# quiz 3\nq1,A\n\n q2 , D \nq3,C\n")
    assert list(key) == [("q1", "A"), ("q2", "D"), ("q3", "C")]
    assert len(key) == 3


@pytest.mark.parametrize("text", ["", "# only comments\n", "q1\n", "q1,A,B\n", "q1,E\n", "q1,a\n",
                                  "q1,A\nq1,B\n", "a b,A\n", "../x,A\n", ",A\n"])
def test_bad_keys(text):
    with pytest.raises(KeyFormatError):
        parse_answer_key(text)


def test_read_key_not_utf8(tmp_path):
    p = tmp_path / "key.txt"
    p.write_bytes(b"q1,\xff\n")
    with pytest.raises(KeyFormatError):
        read_answer_key(p)


# -- verdicts -----------------------------------------------------------------

def test_judge_examples():
    assert judge("q", "A", ClassLabel.A, 0.9).verdict is Verdict.CORRECT
    assert judge("q", "A", ClassLabel.B, 0.9).verdict is Verdict.INCORRECT
    assert judge("q", "A", ClassLabel.UNKNOWN, 0.99).verdict is Verdict.UNREADABLE
    low = judge("q", "A", ClassLabel.A, 0.3, min_confidence=0.5)
    assert low.verdict is Verdict.UNREADABLE and low.predicted is ClassLabel.UNKNOWN and "low" in low.note
    assert judge("q", "A", ClassLabel.A, 0.5, min_confidence=0.5).verdict is Verdict.CORRECT


@given(st.sampled_from(OPTIONS), st.sampled_from(list(ClassLabel)), st.floats(0, 1),
       st.one_of(st.none(), st.floats(0, 1)))
def test_unknown_never_correct(expected, predicted, conf, threshold):
    r = judge("q", expected, predicted, conf, threshold)
    if predicted is ClassLabel.UNKNOWN:
        assert r.verdict is Verdict.UNREADABLE
    if r.verdict is Verdict.CORRECT:
        assert r.predicted.symbol == expected


# -- grading a directory ------------------------------------------------------

def rigged():
    """Classifier that reads the intended class from the image's mean intensity."""
    def classify(batch):
        cls = np.rint(batch.reshape(len(batch), -1).mean(axis=1) * 10).astype(int)
        logits = np.zeros((len(batch), 5))
        logits[np.arange(len(batch)), cls] = 5.0
        return logits
    return classify


def write_answers(tmp_path, answers: dict[str, ClassLabel]):
    for qid, label in answers.items():
        write_pgm(tmp_path / f"{qid}.pgm", np.full((40, 30), int(label) * 25.5, dtype=np.uint8))


def test_grade_seven_two_one(tmp_path):
    key = parse_answer_key("\n".join(f"q{i},{OPTIONS[i % 4]}" for i in range(10)))
    answers = {}
    for i, (qid, opt) in enumerate(key):
        right = ClassLabel[opt]
        if i < 7:
            answers[qid] = right
        elif i < 9:
            answers[qid] = ClassLabel((int(right) + 1) % 4)
        else:
            answers[qid] = ClassLabel.UNKNOWN
    write_answers(tmp_path, answers)
    report = grade(rigged(), tmp_path, key)
    assert (report.correct, report.incorrect, report.unreadable) == (7, 2, 1)
    assert report.score == Fraction(7, 10)
    text = report.to_text()
    assert text.splitlines()[-1] == "SCORE 7/10 unreadable=1"
    assert "score=0.7000" in text
    assert [r.question for r in report.results] == [q for q, _ in key]


@given(st.lists(st.sampled_from(list(ClassLabel)), min_size=10, max_size=10),
       st.lists(st.sampled_from(OPTIONS), min_size=10, max_size=10))
def test_grade_matches_counting_oracle(tmp_path_factory, predicted, expected):
    d = tmp_path_factory.mktemp("answers")
    key = parse_answer_key("\n".join(f"q{i},{e}" for i, e in enumerate(expected)))
    answers = {f"q{i}": p for i, p in enumerate(predicted)}
    write_answers(d, answers)
    report = grade(rigged(), d, key)
    correct = sum(p is not ClassLabel.UNKNOWN and p.symbol == e for p, e in zip(predicted, expected))
    unknown = sum(p is ClassLabel.UNKNOWN for p in predicted)
    assert report.correct + report.incorrect + report.unreadable == 10
    assert (report.correct, report.unreadable) == (correct, unknown)
    assert report.summary_line() == f"SCORE {correct}/10 unreadable={unknown}"
    assert all(r.verdict is not Verdict.CORRECT for r in report.results if r.predicted is ClassLabel.UNKNOWN)


def test_missing_and_broken_images(tmp_path):
    key = parse_answer_key("q1,A\nq2,B\nq3,C\n")
    write_answers(tmp_path, {"q1": ClassLabel.A})
    (tmp_path / "q3.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    report = grade(rigged(), tmp_path, key)
    verdicts = [r.verdict for r in report.results]
    assert verdicts == [Verdict.CORRECT, Verdict.UNREADABLE, Verdict.UNREADABLE]
    assert report.results[1].note == "missing image"
    assert report.results[2].note.startswith("unreadable image")


def test_min_confidence(tmp_path):
    key = parse_answer_key("q1,A\n")
    write_answers(tmp_path, {"q1": ClassLabel.A})
    flat = lambda batch: np.array([[1.0, 0.9, 0.8, 0.7, 0.0]] * len(batch))  # noqa: E731
    assert grade(flat, tmp_path, key).correct == 1
    report = grade(flat, tmp_path, key, min_confidence=0.5)
    assert report.unreadable == 1


def test_grade_with_model(tmp_path):
    from choixgrade.nn import build_mini_resnet, MiniResNetConfig
    model = build_mini_resnet(MiniResNetConfig(widths=(4,), blocks_per_stage=1))
    key = parse_answer_key("q1,A\nq2,B\n")
    write_answers(tmp_path, {"q1": ClassLabel.A, "q2": ClassLabel.B})
    report = grade(model, tmp_path, key)
    assert isinstance(report, GradeReport) and report.total == 2
    assert all(0 < r.confidence <= 1 for r in report.results)
