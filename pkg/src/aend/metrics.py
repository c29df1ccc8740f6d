"""Frame-based diarization scoring.

DER counts speaker-frames. Per frame with Nref reference speakers, Nhyp
hypothesis speakers and Ncorrect mapped pairs jointly active:

    missed speech   += max(0, Nref - Nhyp)
    false alarm     += max(0, Nhyp - Nref)
    confusion       += min(Nref, Nhyp) - Ncorrect

all divided by total reference speaker-frames. Because MS and FA do not
depend on the speaker mapping, minimizing total error is the same as
maximizing the summed co-active overlap of mapped pairs, which is an
assignment problem; that equivalence is what lets the Hungarian solver
stand in for the exhaustive search over mappings.

SAD collapses both sides to any-speaker-active and reports miss and
false alarm, both as a fraction of reference active frames (convention:
one denominator for both, so the two rates are comparable).
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tolerances import FRAME_SECONDS


@dataclass(frozen=True)
class DiarizationScore:
    der: float
    ms: float
    fa: float
    cf: float
    sad_ms: float
    sad_fa: float
    scored_speech: int  # reference speaker-frames in the denominator


def _check_pair(ref, hyp):
    ref = np.asarray(ref)
    hyp = np.asarray(hyp)
    if ref.ndim != 2 or hyp.ndim != 2:
        raise ValueError("activity matrices must be 2-d (speakers x frames)")
    if ref.shape[1] != hyp.shape[1]:
        raise ValueError("frame count mismatch: ref %d vs hyp %d"
                         % (ref.shape[1], hyp.shape[1]))
    return (ref != 0).astype(np.int64), (hyp != 0).astype(np.int64)


def optimal_mapping(ref, hyp):
    """Pairs (ref_idx, hyp_idx) maximizing summed co-active frames.

    One-to-one and partial: rows beyond min(R, H) stay unmapped, as do
    pairs with zero overlap (mapping them would be arbitrary).
    """
    ref, hyp = _check_pair(ref, hyp)
    if ref.shape[0] == 0 or hyp.shape[0] == 0:
        return []
    overlap = ref @ hyp.T
    rows, cols = linear_sum_assignment(-overlap)
    return [(int(r), int(c)) for r, c in zip(rows, cols)
            if overlap[r, c] > 0]


class ScoreAccumulator:
    """Raw error counts summed across recordings; mapping per recording."""

    def __init__(self):
        self.ms = 0
        self.fa = 0
        self.cf = 0
        self.speech = 0
        self.sad_ms = 0
        self.sad_fa = 0
        self.recordings = 0

    def add(self, ref, hyp, scored_mask=None) -> None:
        ref, hyp = _check_pair(ref, hyp)
        if scored_mask is not None:
            keep = np.asarray(scored_mask, dtype=bool)
            ref, hyp = ref[:, keep], hyp[:, keep]
        pairs = optimal_mapping(ref, hyp)
        nref = ref.sum(axis=0)
        nhyp = hyp.sum(axis=0)
        ncorrect = np.zeros(ref.shape[1], dtype=np.int64)
        for r, h in pairs:
            ncorrect += ref[r] * hyp[h]
        self.ms += int(np.maximum(0, nref - nhyp).sum())
        self.fa += int(np.maximum(0, nhyp - nref).sum())
        self.cf += int((np.minimum(nref, nhyp) - ncorrect).sum())
        self.speech += int(nref.sum())

        ref_on = nref > 0
        hyp_on = nhyp > 0
        self.sad_ms += int(np.sum(ref_on & ~hyp_on))
        self.sad_fa += int(np.sum(~ref_on & hyp_on))
        self.recordings += 1

    def score(self) -> DiarizationScore:
        if self.recordings == 0:
            raise ValueError("nothing scored yet")
        if self.speech == 0:
            raise ValueError("no reference speech in scored region")
        def pct(count):
            return 100.0 * count / self.speech

        return DiarizationScore(der=pct(self.ms + self.fa + self.cf),
                                ms=pct(self.ms), fa=pct(self.fa),
                                cf=pct(self.cf), sad_ms=pct(self.sad_ms),
                                sad_fa=pct(self.sad_fa),
                                scored_speech=self.speech)


def der(ref, hyp) -> DiarizationScore:
    acc = ScoreAccumulator()
    acc.add(ref, hyp)
    return acc.score()


def sad(ref, hyp):
    """(miss %, false alarm %) over collapsed speech activity.

    Both use reference active frames as denominator.
    """
    ref, hyp = _check_pair(ref, hyp)
    ref_on = ref.any(axis=0)
    hyp_on = hyp.any(axis=0)
    active = int(ref_on.sum())
    if active == 0:
        raise ValueError("no reference speech")
    ms = 100.0 * int(np.sum(ref_on & ~hyp_on)) / active
    fa = 100.0 * int(np.sum(~ref_on & hyp_on)) / active
    return ms, fa


# -------------------------------------------------- segment-level scoring

def segments_to_activity(segments, num_frames=None,
                         frame_seconds: float = FRAME_SECONDS):
    """(speaker, start s, end s) list -> activity matrix.

    Speaker rows are ordered by first appearance. A frame is active when
    the segment covers any part of it; starts round down, ends round up,
    with a small epsilon so exact frame multiples stay exact.
    """
    speakers = []
    for spk, _, _ in segments:
        if spk not in speakers:
            speakers.append(spk)
    ends = [e for _, _, e in segments]
    frames = int(np.ceil(max(ends) / frame_seconds - 1e-9)) if ends else 0
    if num_frames is None:
        num_frames = frames
    act = np.zeros((len(speakers), num_frames), dtype=np.int64)
    for spk, start, end in segments:
        if end <= start:
            raise ValueError("segment for %r has non-positive duration" % spk)
        lo = int(np.floor(start / frame_seconds + 1e-9))
        hi = int(np.ceil(end / frame_seconds - 1e-9))
        act[speakers.index(spk), lo:min(hi, num_frames)] = 1
    return act


def collar_frame_mask(ref_segments, num_frames: int, collar: float,
                      frame_seconds: float = FRAME_SECONDS):
    """True for frames that stay scored.

    A frame is dropped when it intersects [b - collar, b + collar] for
    any reference segment boundary b. collar <= 0 keeps every frame.
    """
    mask = np.ones(num_frames, dtype=bool)
    if collar <= 0:
        return mask
    for _, start, end in ref_segments:
        for b in (start, end):
            for t in range(num_frames):
                t0 = t * frame_seconds
                t1 = t0 + frame_seconds
                if t0 <= b + collar and t1 > b - collar:
                    mask[t] = False
    return mask


def der_segments(ref_segments, hyp_segments,
                 collar: float = 0.0) -> DiarizationScore:
    """Score two segment lists; the collar excludes frames near
    reference boundaries, mirroring standard RTTM scoring tools."""
    frames = max(
        segments_to_activity(ref_segments).shape[1],
        segments_to_activity(hyp_segments).shape[1] if hyp_segments else 0)
    ref = segments_to_activity(ref_segments, num_frames=frames)
    hyp = segments_to_activity(hyp_segments, num_frames=frames) \
        if hyp_segments else np.zeros((0, frames), dtype=np.int64)
    acc = ScoreAccumulator()
    acc.add(ref, hyp, collar_frame_mask(ref_segments, frames, collar))
    return acc.score()


# ------------------------------------------------------------- reporting

_COLUMNS = ("DER", "MS", "FA", "CF", "SAD MS", "SAD FA")


def report_table(rows) -> str:
    """Aligned text table; rows are (name, DiarizationScore)."""
    name_w = max([len(name) for name, _ in rows] + [len("system")])
    header = "%-*s" % (name_w, "system")
    for col in _COLUMNS:
        header += "  %8s" % col
    lines = [header]
    for name, s in rows:
        cells = (s.der, s.ms, s.fa, s.cf, s.sad_ms, s.sad_fa)
        line = "%-*s" % (name_w, name)
        for value in cells:
            line += "  %8.2f" % value
        lines.append(line)
    return "\n".join(lines)


def score_record(name: str, s: DiarizationScore) -> str:
    import json
    return json.dumps({"name": name, "der": s.der, "ms": s.ms, "fa": s.fa,
                       "cf": s.cf, "sad_ms": s.sad_ms, "sad_fa": s.sad_fa,
                       "scored_speech": s.scored_speech}, sort_keys=True)
