"""CLEAR-MOT and identity metrics.

Per frame, ground truth and hypotheses are matched at IoU >= threshold.
Correspondences from earlier frames are kept while still valid; the rest
are assigned by minimum total ``1 - IoU``. A match whose hypothesis differs
from the one last matched to that ground-truth identity counts as an ID
switch.
"""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..association import CostMatrix, hungarian
from ..errors import InputError
from ..geometry import iou_matrix

REPORT_COLUMNS = ("MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDs", "Frag", "Hz")


@dataclass
class EvalReport:
    mota: float
    idf1: float
    idp: float
    idr: float
    motp: float
    mt: int
    ml: int
    num_gt_ids: int
    fp: int
    fn: int
    ids: int
    frag: int
    num_gt: int
    num_hyp: int
    hz: float = float("nan")
    idtp: float = 0.0

    @property
    def mt_pct(self):
        return 100.0 * self.mt / self.num_gt_ids if self.num_gt_ids else 0.0

    @property
    def ml_pct(self):
        return 100.0 * self.ml / self.num_gt_ids if self.num_gt_ids else 0.0

    def row(self):
        return {"MOTA": self.mota, "IDF1": self.idf1, "MT": self.mt, "ML": self.ml, "FP": self.fp,
                "FN": self.fn, "IDs": self.ids, "Frag": self.frag, "Hz": self.hz}

    def as_dict(self):
        d = asdict(self)
        d.update(mt_pct=self.mt_pct, ml_pct=self.ml_pct)
        return d


def mota(fp, fn, ids, num_gt):
    return 1.0 - (fp + fn + ids) / num_gt if num_gt else float("nan")


def evaluate(gt, results, iou_threshold=0.5, hz=float("nan")):
    """Compare a result table against ground truth."""
    gt_groups = gt.frame_groups()
    hyp_groups = results.frame_groups()
    if hyp_groups and gt_groups and (min(hyp_groups) < 1 or max(hyp_groups) > max(gt_groups)):
        raise InputError(f"motio: result frames {min(hyp_groups)}..{max(hyp_groups)} fall outside "
                         f"ground-truth frames 1..{max(gt_groups)}")
    if hyp_groups and not gt_groups:
        raise InputError("motio: results given for an empty ground truth")

    gt_ids_all = sorted(set(gt.ids.tolist()))
    hyp_ids_all = sorted(set(results.ids.tolist()))
    gpos = {g: k for k, g in enumerate(gt_ids_all)}
    hpos = {h: k for k, h in enumerate(hyp_ids_all)}
    overlap = np.zeros((len(gt_ids_all), len(hyp_ids_all)))

    last_match = {}
    present = {g: 0 for g in gt_ids_all}
    tracked = {g: 0 for g in gt_ids_all}
    status = {g: [] for g in gt_ids_all}  # per present frame: matched or not
    fp = fn = ids = 0
    iou_sum, n_match = 0.0, 0

    for f in sorted(set(gt_groups) | set(hyp_groups)):
        gi = gt_groups.get(f, np.zeros(0, int))
        hi = hyp_groups.get(f, np.zeros(0, int))
        g_ids = gt.ids[gi].tolist()
        h_ids = results.ids[hi].tolist()
        ious = iou_matrix(gt.boxes[gi], results.boxes[hi])
        valid = ious >= iou_threshold
        for a, b in np.argwhere(valid):
            overlap[gpos[g_ids[a]], hpos[h_ids[b]]] += 1

        matches = []
        used_g, used_h = set(), set()
        h_index = {h: b for b, h in enumerate(h_ids)}
        for a, g in enumerate(g_ids):
            b = h_index.get(last_match.get(g))
            if b is not None and b not in used_h and valid[a, b]:
                matches.append((a, b))
                used_g.add(a)
                used_h.add(b)
        rest_g = [a for a in range(len(g_ids)) if a not in used_g]
        rest_h = [b for b in range(len(h_ids)) if b not in used_h]
        if rest_g and rest_h:
            sub = ious[np.ix_(rest_g, rest_h)]
            cm = CostMatrix(1.0 - sub, sub < iou_threshold, sub, sub)
            for a, b in hungarian(cm).matches:
                matches.append((rest_g[a], rest_h[b]))

        matched_g = set()
        for a, b in matches:
            g, h = g_ids[a], h_ids[b]
            if g in last_match and last_match[g] != h:
                ids += 1
            last_match[g] = h
            matched_g.add(a)
            iou_sum += ious[a, b]
            n_match += 1
        fp += len(h_ids) - len(matches)
        fn += len(g_ids) - len(matches)
        for a, g in enumerate(g_ids):
            present[g] += 1
            tracked[g] += a in matched_g
            status[g].append(a in matched_g)

    frag = 0
    for g, st in status.items():
        if not any(st):
            continue
        first = st.index(True)
        last = len(st) - 1 - st[::-1].index(True)
        seg = st[first:last + 1]
        frag += sum(1 for k in range(1, len(seg)) if not seg[k] and seg[k - 1])
    ratios = [tracked[g] / present[g] for g in gt_ids_all if present[g]]
    mt = sum(r >= 0.8 for r in ratios)
    ml = sum(r <= 0.2 for r in ratios)

    num_gt, num_hyp = len(gt), len(results)
    idtp = 0.0
    if overlap.size:
        r, c = linear_sum_assignment(-overlap)
        idtp = float(overlap[r, c].sum())
    idf1 = 2 * idtp / (num_gt + num_hyp) if num_gt + num_hyp else float("nan")
    idp = idtp / num_hyp if num_hyp else float("nan")
    idr = idtp / num_gt if num_gt else float("nan")
    return EvalReport(mota=mota(fp, fn, ids, num_gt), idf1=idf1, idp=idp, idr=idr,
                      motp=iou_sum / n_match if n_match else float("nan"),
                      mt=int(mt), ml=int(ml), num_gt_ids=len(ratios), fp=fp, fn=fn, ids=ids, frag=frag,
                      num_gt=num_gt, num_hyp=num_hyp, hz=hz, idtp=idtp)


def combine_reports(reports):
    """Pool several sequences the way benchmark totals are formed: counts
    are summed and the ratios recomputed from the sums. Hz is the harmonic
    mean, which equals total frames over total time for sequences of equal
    length."""
    reports = list(reports)
    if not reports:
        raise InputError("motio: no reports to combine")
    tot = {k: sum(getattr(r, k) for r in reports)
           for k in ("mt", "ml", "num_gt_ids", "fp", "fn", "ids", "frag", "num_gt", "num_hyp", "idtp")}
    n_match = sum(r.num_gt - r.fn for r in reports)
    motp = sum(r.motp * (r.num_gt - r.fn) for r in reports if r.num_gt > r.fn) / n_match if n_match else float("nan")
    n, h = tot["num_gt"], tot["num_hyp"]
    return EvalReport(mota=mota(tot["fp"], tot["fn"], tot["ids"], n),
                      idf1=2 * tot["idtp"] / (n + h) if n + h else float("nan"),
                      idp=tot["idtp"] / h if h else float("nan"), idr=tot["idtp"] / n if n else float("nan"),
                      motp=motp, hz=float(len(reports) / np.sum(1.0 / np.array([r.hz for r in reports], dtype=float))), **tot)


def format_table(reports, names=None):
    """Aligned text table, one row per report."""
    names = names or [""] * len(reports)
    width = max([len(n) for n in names] + [7])
    head = f"{'Tracker':<{width}}  " + "  ".join(f"{c:>7}" for c in REPORT_COLUMNS)
    lines = [head, "-" * len(head)]
    for name, rep in zip(names, reports):
        r = rep.row()
        cells = [f"{100 * r['MOTA']:7.1f}", f"{100 * r['IDF1']:7.1f}", f"{r['MT']:7d}", f"{r['ML']:7d}",
                 f"{r['FP']:7d}", f"{r['FN']:7d}", f"{r['IDs']:7d}", f"{r['Frag']:7d}", f"{r['Hz']:7.1f}"]
        lines.append(f"{name:<{width}}  " + "  ".join(cells))
    return "\n".join(lines)


def format_csv(reports, names=None):
    names = names or [""] * len(reports)
    lines = ["tracker," + ",".join(REPORT_COLUMNS)]
    for name, rep in zip(names, reports):
        r = rep.row()
        lines.append(f"{name},{r['MOTA']:.6f},{r['IDF1']:.6f},{r['MT']},{r['ML']},{r['FP']},{r['FN']},"
                     f"{r['IDs']},{r['Frag']},{r['Hz']:.3f}")
    return "\n".join(lines) + "\n"
