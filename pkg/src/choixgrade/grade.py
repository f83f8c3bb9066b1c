"""Answer keys and grading a directory of handwritten answers."""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .data.dataset import ClassLabel
from .data.imaging import preprocess_any, read_pgm
from .errors import DataError, KeyFormatError
from .nn.layers import softmax
from .nn.model import Model, predict_logits

OPTIONS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class AnswerKey:
    entries: tuple[tuple[str, str], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _valid_qid(qid: str) -> bool:
    return bool(qid) and not any(c.isspace() or c in "/\\" for c in qid) and qid not in (".", "..")


def parse_answer_key(text: str) -> AnswerKey:
    """Parse ``<question id>,<option>`` lines; blank lines and ``#`` comments are skipped."""
    entries, seen = [], set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise KeyFormatError(f"line {lineno}: expected '<question id>,<option>', got {raw!r}")
        qid, option = parts
        if not _valid_qid(qid):
            raise KeyFormatError(f"line {lineno}: bad question id {qid!r}")
        if option not in OPTIONS:
            raise KeyFormatError(f"line {lineno}: option must be one of A-D, got {option!r}")
        if qid in seen:
            raise KeyFormatError(f"line {lineno}: question {qid!r} listed twice")
        seen.add(qid)
        entries.append((qid, option))
    if not entries:
        raise KeyFormatError("answer key lists no questions")
    return AnswerKey(tuple(entries))


def read_answer_key(path: str | Path) -> AnswerKey:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise KeyFormatError(f"{path}: not UTF-8 text ({e})") from None
    return parse_answer_key(text)


class Verdict(enum.Enum):
    CORRECT = "Correct"
    INCORRECT = "Incorrect"
    UNREADABLE = "Unreadable"


@dataclass(frozen=True)
class QuestionResult:
    question: str
    predicted: ClassLabel
    expected: str
    verdict: Verdict
    confidence: float
    note: str = ""


def judge(question: str, expected: str, predicted: ClassLabel, confidence: float,
          min_confidence: float | None = None, note: str = "") -> QuestionResult:
    """Verdict for one answer. Unknown, or a letter below ``min_confidence``, is Unreadable."""
    if predicted is not ClassLabel.UNKNOWN and min_confidence is not None and confidence < min_confidence:
        note = note or f"low confidence ({predicted.symbol})"
        predicted = ClassLabel.UNKNOWN
    if predicted is ClassLabel.UNKNOWN:
        verdict = Verdict.UNREADABLE
    elif predicted.symbol == expected:
        verdict = Verdict.CORRECT
    else:
        verdict = Verdict.INCORRECT
    return QuestionResult(question, predicted, expected, verdict, float(confidence), note)


@dataclass
class GradeReport:
    results: list[QuestionResult]

    def count(self, verdict: Verdict) -> int:
        return sum(r.verdict is verdict for r in self.results)

    @property
    def correct(self) -> int:
        return self.count(Verdict.CORRECT)

    @property
    def incorrect(self) -> int:
        return self.count(Verdict.INCORRECT)

    @property
    def unreadable(self) -> int:
        return self.count(Verdict.UNREADABLE)

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def score(self) -> Fraction:
        return Fraction(self.correct, self.total)

    def summary_line(self) -> str:
        return f"SCORE {self.correct}/{self.total} unreadable={self.unreadable}"

    def to_text(self) -> str:
        head = ("question", "expected", "predicted", "verdict", "confidence", "note")
        body = [(r.question, r.expected, r.predicted.symbol, r.verdict.value, f"{r.confidence:.4f}", r.note)
                for r in self.results]
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head, *body]]
        lines.append(f"correct={self.correct} incorrect={self.incorrect} unreadable={self.unreadable} "
                     f"score={float(self.score):.4f}")
        lines.append(self.summary_line())
        return "\n".join(lines) + "\n"


Classifier = Callable[[np.ndarray], np.ndarray]


def _load_answer(path: Path):
    """Returns ``(image, note)``; the image is None when it cannot be used."""
    if not path.is_file():
        return None, "missing image"
    try:
        pixels, maxval = read_pgm(path)
        return preprocess_any(pixels, maxval), ""
    except (DataError, OSError) as e:
        return None, f"unreadable image: {e}"


def grade(model: Model | Classifier, answers_dir: str | Path, key: AnswerKey,
          min_confidence: float | None = None, workers: int = 4) -> GradeReport:
    """Classify ``<question id>.pgm`` for every keyed question and judge it.

    ``model`` may also be any callable mapping an ``(n, 1, 64, 64)`` float
    batch to ``(n, 5)`` logits.  Images are decoded on a thread pool and
    classified in one batch; results follow key order.
    """
    d = Path(answers_dir)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        loaded = list(pool.map(_load_answer, [d / f"{qid}.pgm" for qid, _ in key]))
    usable = [i for i, (img, _) in enumerate(loaded) if img is not None]
    logits = probs = np.zeros((0, len(ClassLabel)))
    if usable:
        batch = np.stack([loaded[i][0] for i in usable])[:, None].astype(np.float32)
        logits = predict_logits(model, batch) if isinstance(model, Model) else np.asarray(model(batch))
        probs = softmax(logits).data
    results = []
    row = {i: j for j, i in enumerate(usable)}
    for i, (qid, expected) in enumerate(key):
        if i in row:
            j = row[i]
            pred = ClassLabel(int(np.argmax(logits[j])))
            results.append(judge(qid, expected, pred, float(probs[j, pred]), min_confidence))
        else:
            results.append(QuestionResult(qid, ClassLabel.UNKNOWN, expected, Verdict.UNREADABLE, 0.0,
                                          loaded[i][1]))
    return GradeReport(results)
