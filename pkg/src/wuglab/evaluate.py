"""Forced-choice scoring, greedy diagnostics, one-shot test, state export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from . import bpe as bpelib
from .battery import Battery, ItemType, WugItem
from .bpe import BOS_ID, BpeModel
from .corpusgen import Corpus, LEXICON
from .model import Checkpoint, forward, next_token_logprobs, score_completion

TIE_EPS = 1e-9

RESULT_COLUMNS = [
    "run_id", "condition", "size_tag", "seed", "item_id", "item_type",
    "kind_id", "logp_target", "logp_foil", "correct", "tie", "rank_target",
    "rank_in_dim", "greedy_token", "multi_subword_target",
]


@dataclass
class RunResultRow:
    run_id: str
    condition: str
    size_tag: str
    seed: int
    item_id: str
    item_type: str
    kind_id: int
    logp_target: float
    logp_foil: float
    correct: int
    tie: bool
    rank_target: int
    rank_in_dim: int
    greedy_token: str
    multi_subword_target: bool


def _prompt_ids(bm: BpeModel, item: WugItem) -> list[int]:
    text = item.prompt
    if item.context_prefix:
        text = item.context_prefix + " " + text
    return [BOS_ID] + bpelib.encode(bm, text)


def _completion_ids(bm: BpeModel, token: str) -> list[int]:
    return bpelib.encode(bm, " " + token)


def _score(ckpt: Checkpoint, bm: BpeModel, prompt_ids, token, last_lp) -> float:
    ids = _completion_ids(bm, token)
    if len(ids) == 1:
        return float(last_lp[ids[0]])
    return score_completion(ckpt, prompt_ids, ids)


def run_forced_choice(
    ckpt: Checkpoint,
    battery: Battery,
    bm: BpeModel,
    run_id: str = "",
    condition: str = "",
    size_tag: str = "",
    seed: int = 0,
) -> list[RunResultRow]:
    """One row per item, ordered by item_id. Ties count as incorrect."""
    id2str = {v: k for k, v in bm.token_strings().items()}
    rows = []
    for item in sorted(battery.items, key=lambda it: it.item_id):
        prompt_ids = _prompt_ids(bm, item)
        if len(prompt_ids) + 3 > ckpt.config.max_seq_len:
            raise ValueError(f"{item.item_id}: prompt exceeds max_seq_len")
        last_lp = next_token_logprobs(ckpt, prompt_ids)
        lt = _score(ckpt, bm, prompt_ids, item.target_completion, last_lp)
        lf = _score(ckpt, bm, prompt_ids, item.foil_completion, last_lp)
        tie = abs(lt - lf) <= TIE_EPS
        correct = int((lt > lf) and not tie)
        t_first = _completion_ids(bm, item.target_completion)[0]
        rank_target = 1 + int((last_lp > last_lp[t_first]).sum())
        dim_tokens = LEXICON.tokens_for_dim(item.target_dim)
        dim_first = [_completion_ids(bm, t)[0] for t in dim_tokens]
        dim_lp = sorted((float(last_lp[i]) for i in dim_first), reverse=True)
        rank_in_dim = 1 + sum(1 for v in dim_lp if v > float(last_lp[t_first]))
        g = int(torch.argmax(last_lp))
        rows.append(
            RunResultRow(
                run_id=run_id,
                condition=condition,
                size_tag=size_tag,
                seed=seed,
                item_id=item.item_id,
                item_type=item.item_type.value,
                kind_id=item.kind_id,
                logp_target=lt,
                logp_foil=lf,
                correct=correct,
                tie=tie,
                rank_target=rank_target,
                rank_in_dim=rank_in_dim,
                greedy_token=id2str.get(g, ""),
                multi_subword_target=len(_completion_ids(bm, item.target_completion)) > 1,
            )
        )
    return rows


def aggregate(rows: list[RunResultRow]) -> dict[str, dict]:
    """(condition,size,seed,item_type) cells: accuracy, n, mean dlogp, rank."""
    cells: dict[tuple, list[RunResultRow]] = {}
    for r in rows:
        cells.setdefault((r.condition, r.size_tag, r.seed, r.item_type), []).append(r)
    out = {}
    for key, rs in sorted(cells.items()):
        out["|".join(map(str, key))] = {
            "condition": key[0],
            "size_tag": key[1],
            "seed": key[2],
            "item_type": key[3],
            "n": len(rs),
            "accuracy": sum(r.correct for r in rs) / len(rs),
            "mean_delta_logp": float(np.mean([r.logp_target - r.logp_foil for r in rs])),
            "mean_rank": float(np.mean([r.rank_target for r in rs])),
        }
    return out


def greedy_diagnostics(ckpt: Checkpoint, battery: Battery, bm: BpeModel) -> dict:
    """Greedy-token rates at the critical position for FO and SO items."""
    shape_first = {
        _completion_ids(bm, t)[0] for t in LEXICON.shape_tokens
    }
    out = {}
    for itype in (ItemType.FIRST_ORDER, ItemType.SECOND_ORDER):
        items = [it for it in battery.items if it.item_type == itype]
        n_specific = n_class = 0
        for item in items:
            lp = next_token_logprobs(ckpt, _prompt_ids(bm, item))
            g = int(torch.argmax(lp))
            n_specific += g == _completion_ids(bm, item.target_completion)[0]
            n_class += g in shape_first
        out[itype.value] = {
            "n": len(items),
            "correct_specific_rate": n_specific / len(items),
            "shape_class_rate": n_class / len(items),
        }
    return out


def run_one_shot(ckpt: Checkpoint, battery: Battery, bm: BpeModel) -> dict:
    """Target-token rank with and without the in-context exemplar."""
    per_item = []
    for item in battery.items:
        if item.item_type not in (ItemType.ONE_SHOT_IN_CONTEXT, ItemType.ONE_SHOT_CONTROL):
            continue
        t_first = _completion_ids(bm, item.target_completion)[0]

        def rank(ids):
            lp = next_token_logprobs(ckpt, ids)
            return 1 + int((lp > lp[t_first]).sum())

        base_ids = [BOS_ID] + bpelib.encode(bm, item.prompt)
        ctx_ids = _prompt_ids(bm, item)
        per_item.append(
            {
                "item_id": item.item_id,
                "item_type": item.item_type.value,
                "rank_baseline": rank(base_ids),
                "rank_with_context": rank(ctx_ids),
            }
        )
    summary = {}
    for t in ("one_shot_in_context", "one_shot_control"):
        rs = [r for r in per_item if r["item_type"] == t]
        summary[t] = {
            "n": len(rs),
            "mean_rank_baseline": float(np.mean([r["rank_baseline"] for r in rs])),
            "mean_rank_with_context": float(np.mean([r["rank_with_context"] for r in rs])),
        }
    return {"items": per_item, "summary": summary}


# ---------------------------------------------------------------------------
# Hidden-state export


def _noun_final_position(bm: BpeModel, item: WugItem, label: str) -> int:
    """Token index (in BOS-prefixed prompt ids) of the label's last subword."""
    text = item.prompt
    if item.context_prefix:
        text = item.context_prefix + " " + text
    words = text.split()
    try:
        w_idx = len(words) - 1 - words[::-1].index(label)
    except ValueError:
        raise ValueError(f"label {label!r} not in prompt of {item.item_id}")
    prefix = " ".join(words[: w_idx + 1])
    return 1 + len(bpelib.encode(bm, prefix)) - 1


def export_hidden_states(
    ckpt: Checkpoint,
    battery: Battery,
    bm: BpeModel,
    corpus: Corpus,
    item_types: tuple[ItemType, ...] = (ItemType.FIRST_ORDER,),
    positions: tuple[str, ...] = ("critical",),
) -> dict:
    """Per item x layer activation vectors at the requested positions.

    Returns {"index": [...], position: array (n_items, n_layers+1, d_model)}.
    """
    kind_by_id = {k.kind_id: k for k in corpus.spec.kinds}
    items = [it for it in battery.items if it.item_type in item_types]
    items.sort(key=lambda it: it.item_id)
    n_layers = ckpt.config.n_layers + 1
    out = {p: np.zeros((len(items), n_layers, ckpt.config.d_model), dtype=np.float32) for p in positions}
    index = []
    for i, item in enumerate(items):
        ids = _prompt_ids(bm, item)
        _, hiddens = forward(ckpt, ids)
        for pos_name in positions:
            if pos_name == "critical":
                pos = len(ids) - 1
            elif pos_name == "noun_final":
                kind = kind_by_id[item.kind_id]
                label = kind.noun if kind.noun in item.prompt.split() else kind.marker
                pos = _noun_final_position(bm, item, label)
            else:
                raise ValueError(f"unknown position {pos_name!r}")
            if pos >= len(ids):
                raise ValueError(f"position {pos} out of range for {item.item_id}")
            for layer in range(n_layers):
                out[pos_name][i, layer] = hiddens[layer][pos].numpy()
        index.append({"item_id": item.item_id, "kind_id": item.kind_id})
    out["index"] = index
    return out


def save_hidden_states(export: dict, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"index": export["index"], "arrays": {}}
    for key, val in export.items():
        if key == "index":
            continue
        fname = f"hidden_{key}.f32"
        meta["arrays"][key] = {"file": fname, "shape": list(val.shape)}
        (out_dir / fname).write_bytes(np.ascontiguousarray(val).tobytes())
    (out_dir / "hidden_index.json").write_text(json.dumps(meta, sort_keys=True))


def load_hidden_states(out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "hidden_index.json").read_text())
    out = {"index": meta["index"]}
    for key, rec in meta["arrays"].items():
        data = np.frombuffer((out_dir / rec["file"]).read_bytes(), dtype=np.float32)
        out[key] = data.reshape(rec["shape"]).copy()
    return out


def write_results_csv(rows: list[RunResultRow], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def read_results_csv(path: Path) -> list[RunResultRow]:
    rows = []
    with open(path) as f:
        for rec in csv.DictReader(f):
            rows.append(
                RunResultRow(
                    run_id=rec["run_id"],
                    condition=rec["condition"],
                    size_tag=rec["size_tag"],
                    seed=int(rec["seed"]),
                    item_id=rec["item_id"],
                    item_type=rec["item_type"],
                    kind_id=int(rec["kind_id"]),
                    logp_target=float(rec["logp_target"]),
                    logp_foil=float(rec["logp_foil"]),
                    correct=int(rec["correct"]),
                    tie=rec["tie"] == "True",
                    rank_target=int(rec["rank_target"]),
                    rank_in_dim=int(rec["rank_in_dim"]),
                    greedy_token=rec["greedy_token"],
                    multi_subword_target=rec["multi_subword_target"] == "True",
                )
            )
    return rows
