# gender.py
import logging
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from divergence import female_fraction
from errors import UndefinedMetricError
from textcore import ParallelCorpus, SubsetLexicon, TokenizedCorpus, check_aligned

logger = logging.getLogger(__name__)


class PronounConfusion(BaseModel):
    """Pronoun match and replacement counts between hypothesis and reference."""

    model_config = ConfigDict(frozen=True)

    female_ref_total: int
    male_ref_total: int
    female_matched: int
    male_matched: int
    female_to_male: int
    male_to_female: int
    female_ref_sentences: int
    male_ref_sentences: int
    female_to_male_sentences: int
    male_to_female_sentences: int

    @property
    def female_to_male_rate(self) -> Optional[float]:
        return _rate(self.female_to_male, self.female_ref_total)

    @property
    def male_to_female_rate(self) -> Optional[float]:
        return _rate(self.male_to_female, self.male_ref_total)

    @property
    def female_to_male_sentence_rate(self) -> Optional[float]:
        return _rate(self.female_to_male_sentences, self.female_ref_sentences)

    @property
    def male_to_female_sentence_rate(self) -> Optional[float]:
        return _rate(self.male_to_female_sentences, self.male_ref_sentences)


class GenderReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    side: str
    token_recall: Dict[str, Optional[float]]
    female_recall: Optional[float]
    male_recall: Optional[float]
    female_to_male_rate: Optional[float]
    male_to_female_rate: Optional[float]
    female_to_male_sentence_rate: Optional[float]
    male_to_female_sentence_rate: Optional[float]
    hypothesis_female_fraction: Optional[float]
    reference_female_fraction: Optional[float]
    confusion: PronounConfusion


def _rate(events: int, total: int) -> Optional[float]:
    return events / total if total else None


def _count(tokens: Tuple[str, ...], forms) -> int:
    return sum(1 for t in tokens if t.casefold() in forms)


def token_recall(hyp: TokenizedCorpus, ref: TokenizedCorpus, token: str) -> Optional[float]:
    """
    Clipped recall of one token over the corpus (case-folded).

    Args:
        hyp (TokenizedCorpus): System output.
        ref (TokenizedCorpus): Aligned reference.
        token (str): Surface form, e.g. "she".

    Returns:
        Optional[float]: Matched occurrences over reference occurrences; None
        when the reference never contains the token.
    """
    check_aligned(hyp, ref)
    forms = {token.casefold()}
    matched = total = 0
    for h, r in zip(hyp.surfaces(), ref.surfaces()):
        in_ref = _count(r, forms)
        total += in_ref
        matched += min(in_ref, _count(h, forms))
    return matched / total if total else None


def misgender_matrix(hyp: TokenizedCorpus, ref: TokenizedCorpus, lexicon: SubsetLexicon, side: str) -> PronounConfusion:
    """
    Count per-sentence pronoun matches and cross-gender replacements.

    A female->male event needs the hypothesis to lose female pronouns and
    gain male ones in the same sentence; its size is the smaller of the two
    changes. Male->female is symmetric.

    Args:
        hyp (TokenizedCorpus): System output.
        ref (TokenizedCorpus): Aligned reference.
        lexicon (SubsetLexicon): Gendered classes.
        side (str): Language side, e.g. "english".

    Returns:
        PronounConfusion: Totals, matches and replacement events.
    """
    check_aligned(hyp, ref)
    female_name, male_name = lexicon.gender_classes(side)
    female_forms, male_forms = lexicon.forms(female_name), lexicon.forms(male_name)
    counts = dict.fromkeys(PronounConfusion.model_fields, 0)
    for h, r in zip(hyp.surfaces(), ref.surfaces()):
        fr, fh = _count(r, female_forms), _count(h, female_forms)
        mr, mh = _count(r, male_forms), _count(h, male_forms)
        counts["female_ref_total"] += fr
        counts["male_ref_total"] += mr
        counts["female_matched"] += min(fr, fh)
        counts["male_matched"] += min(mr, mh)
        counts["female_ref_sentences"] += fr > 0
        counts["male_ref_sentences"] += mr > 0
        f2m = max(0, min(fr - fh, mh - mr))
        m2f = max(0, min(mr - mh, fh - fr))
        counts["female_to_male"] += f2m
        counts["male_to_female"] += m2f
        counts["female_to_male_sentences"] += f2m > 0
        counts["male_to_female_sentences"] += m2f > 0
    return PronounConfusion(**counts)


def gender_report(parallel: ParallelCorpus, lexicon: SubsetLexicon, side: str) -> GenderReport:
    """
    Token recalls, aggregate recalls, misgender rates and female fractions.

    Args:
        parallel (ParallelCorpus): Corpus with a hypothesis; the first
            reference is used.
        lexicon (SubsetLexicon): Gendered classes.
        side (str): Target language side.

    Returns:
        GenderReport: The assembled report.
    """
    hyp = parallel.hypothesis
    if hyp is None:
        raise UndefinedMetricError("parallel corpus carries no hypothesis")
    ref = parallel.reference
    female_name, male_name = lexicon.gender_classes(side)
    pronouns: List[str] = sorted(lexicon.forms(female_name)) + sorted(lexicon.forms(male_name))
    confusion = misgender_matrix(hyp, ref, lexicon, side)
    return GenderReport(
        side=side,
        token_recall={p: token_recall(hyp, ref, p) for p in pronouns},
        female_recall=_rate(confusion.female_matched, confusion.female_ref_total),
        male_recall=_rate(confusion.male_matched, confusion.male_ref_total),
        female_to_male_rate=confusion.female_to_male_rate,
        male_to_female_rate=confusion.male_to_female_rate,
        female_to_male_sentence_rate=confusion.female_to_male_sentence_rate,
        male_to_female_sentence_rate=confusion.male_to_female_sentence_rate,
        hypothesis_female_fraction=female_fraction(hyp, lexicon, side),
        reference_female_fraction=female_fraction(ref, lexicon, side),
        confusion=confusion,
    )
