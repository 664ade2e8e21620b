"""Question records, dataset loaders and deterministic splitting."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .errors import ValidationError

Label = Union[bool, int]

# Sentinel for "no parseable answer". A string so it survives JSON untouched
# and can never compare equal to a bool or int label.
ABSTAIN = "ABSTAIN"

STRATEGYQA_SPACE: tuple[bool, ...] = (True, False)
MMLU_SPACE: tuple[int, ...] = (0, 1, 2, 3)
MMLU_LETTERS = "ABCD"

_TRUE_WORDS = {"true", "yes", "1", "t", "y"}
_FALSE_WORDS = {"false", "no", "0", "f", "n"}


def same_label(a: Any, b: Any) -> bool:
    """Type-strict label equality (``True == 1`` must not hold here)."""
    return type(a) is type(b) and a == b


def index_label(label: Any, space: Sequence[Any]) -> int:
    for i, candidate in enumerate(space):
        if same_label(candidate, label):
            return i
    raise ValueError(f"{label!r} is not in answer space {list(space)!r}")


def parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE_WORDS:
        return True
    if text in _FALSE_WORDS:
        return False
    raise ValueError(f"cannot interpret {value!r} as a boolean")


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    text: str
    answer_space: tuple = STRATEGYQA_SPACE
    gold: Label = True
    subject: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "answer_space", tuple(self.answer_space))
        if not self.answer_space:
            raise ValidationError(f"{self.question_id}: empty answer space")
        if not any(same_label(self.gold, a) for a in self.answer_space):
            raise ValidationError(
                f"{self.question_id}: gold {self.gold!r} not in {list(self.answer_space)!r}"
            )

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "text": self.text,
            "answer_space": list(self.answer_space),
            "gold": self.gold,
            "subject": self.subject,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        return cls(
            question_id=str(d["question_id"]),
            text=d["text"],
            answer_space=tuple(d["answer_space"]),
            gold=d["gold"],
            subject=d.get("subject"),
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 42
    subset_size: int | None = None

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.subset_size is not None and self.subset_size < 1:
            raise ValidationError("subset_size must be positive")


def _read_json_rows(path: Path) -> list[Any]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        return json.loads(text)
    if stripped.startswith("{") and path.suffix == ".json":
        payload = json.loads(text)
        # some dumps wrap the rows, e.g. {"data": [...]}
        for key in ("data", "examples", "rows"):
            if isinstance(payload.get(key), list):
                return payload[key]
        return [payload]
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: row {lineno}: invalid JSON ({exc.msg})") from exc
    return rows


def load_strategyqa(path: str | Path) -> list[QuestionRecord]:
    """Load StrategyQA from its published JSON array (or JSONL).

    Rows need ``question`` and ``answer``; ``qid`` is used as the id when present.
    """
    path = Path(path)
    records = []
    for rowno, row in enumerate(_read_json_rows(path), 1):
        try:
            question = row["question"]
            gold = parse_bool(row["answer"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: row {rowno}: malformed StrategyQA row ({exc})") from exc
        qid = row.get("qid") or row.get("question_id") or row.get("id") or f"sqa-{rowno:05d}"
        records.append(
            QuestionRecord(str(qid), str(question), STRATEGYQA_SPACE, gold, row.get("subject"))
        )
    return records


def format_mmlu_question(question: str, choices: Sequence[str]) -> str:
    lines = [question.strip()]
    lines += [f"{MMLU_LETTERS[i]}. {c}" for i, c in enumerate(choices)]
    return "\n".join(lines)


def _mmlu_answer(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean is not an MMLU answer")
    if isinstance(value, int):
        idx = value
    else:
        text = str(value).strip().upper()
        idx = MMLU_LETTERS.index(text) if len(text) == 1 and text in MMLU_LETTERS else int(text)
    if idx not in MMLU_SPACE:
        raise ValueError(f"answer index {idx} out of range")
    return idx


_SPLIT_SUFFIX = re.compile(r"_(test|dev|val|auxiliary_train|train)$")


def load_mmlu(path: str | Path) -> list[QuestionRecord]:
    """Load MMLU from the original headerless CSVs (a file or a directory of them)
    or from JSON/JSONL rows shaped ``{question, choices, answer, subject}``.

    Letter answers are mapped A->0 ... D->3.
    """
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    records: list[QuestionRecord] = []
    for file in files:
        if file.suffix == ".csv":
            subject = _SPLIT_SUFFIX.sub("", file.stem)
            with file.open(newline="", encoding="utf-8") as fh:
                for rowno, row in enumerate(csv.reader(fh), 1):
                    if not row:
                        continue
                    try:
                        if len(row) != 6:
                            raise ValueError(f"expected 6 columns, got {len(row)}")
                        gold = _mmlu_answer(row[5])
                    except ValueError as exc:
                        raise ValidationError(f"{file}: row {rowno}: {exc}") from exc
                    records.append(
                        QuestionRecord(
                            f"{subject}-{rowno:05d}",
                            format_mmlu_question(row[0], row[1:5]),
                            MMLU_SPACE,
                            gold,
                            subject,
                        )
                    )
        else:
            for rowno, row in enumerate(_read_json_rows(file), 1):
                try:
                    choices = list(row["choices"])
                    if len(choices) != 4:
                        raise ValueError(f"expected 4 choices, got {len(choices)}")
                    gold = _mmlu_answer(row["answer"])
                    question = row["question"]
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValidationError(f"{file}: row {rowno}: malformed MMLU row ({exc})") from exc
                subject = row.get("subject")
                qid = row.get("question_id") or f"{subject or 'mmlu'}-{rowno:05d}"
                records.append(
                    QuestionRecord(str(qid), format_mmlu_question(question, choices), MMLU_SPACE, gold, subject)
                )
    return records


def load_dataset(name: str, path: str | Path) -> list[QuestionRecord]:
    loaders = {"strategyqa": load_strategyqa, "mmlu": load_mmlu}
    if name not in loaders:
        raise ValidationError(f"unknown dataset {name!r}; expected one of {sorted(loaders)}")
    return loaders[name](path)


def split(records: Sequence[QuestionRecord], spec: SplitSpec) -> tuple[list, list]:
    """Seeded shuffle then partition.

    The permutation is ``numpy.random.default_rng(seed).permutation(n)``; the first
    ``round(n * train_fraction)`` shuffled records form the train side. Keep this
    fixed: changing the shuffler changes split membership.
    """
    n = len(records)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(n * spec.train_fraction))
    train = [records[i] for i in order[:n_train]]
    test = [records[i] for i in order[n_train:]]
    if spec.subset_size is not None:
        if spec.subset_size > len(train):
            raise ValidationError(
                f"subset_size {spec.subset_size} exceeds train size {len(train)}"
            )
        train = train[: spec.subset_size]
    return train, test


def write_records(records: Iterable[QuestionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def read_records(path: str | Path) -> list[QuestionRecord]:
    return [QuestionRecord.from_dict(row) for row in _read_json_rows(Path(path))]


_SUBJECTS = [
    ("the Eiffel Tower", "visible from the Moon with the naked eye", False),
    ("a honey bee", "able to survive a winter alone", False),
    ("Julius Caesar", "familiar with the Roman alphabet", True),
    ("a penguin", "capable of flying long distances", False),
    ("the Amazon river", "longer than the Thames", True),
    ("Isaac Newton", "a user of smartphones", False),
    ("a diamond", "harder than talc", True),
    ("the Pacific Ocean", "larger than Lake Geneva", True),
    ("a tomato", "botanically a fruit", True),
    ("Mount Everest", "shorter than a skyscraper", False),
    ("Karachi", "a part of Alexander the Great's success", True),
    ("a goldfish", "able to read a newspaper", False),
]


def synthetic_strategyqa(n: int, seed: int = 42) -> list[dict]:
    """Deterministic StrategyQA-shaped rows for desk-scale runs."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        entity, prop, truth = _SUBJECTS[int(rng.integers(len(_SUBJECTS)))]
        rows.append(
            {"qid": f"syn-{i:04d}", "question": f"Is {entity} {prop}? (case {i})", "answer": truth}
        )
    return rows
