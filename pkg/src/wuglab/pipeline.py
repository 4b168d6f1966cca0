"""Run-matrix orchestration, content-hash registry, and report emission.

Each run lives under runs/<condition>/<size>/<seed>/ with one directory per
stage. The registry records, per (run, stage), the hash of the stage's
inputs and outputs; a stage re-executes only when its input hash changes,
so re-invoking a completed matrix performs zero work and deleting an
artifact re-runs exactly its downstream stages.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import battery as batterylib
from . import bpe as bpelib
from . import corpusgen
from . import evaluate
from . import hbm as hbmlib
from . import probes as probelib
from . import stats as statslib
from .battery import ItemType
from .corpusgen import CorpusCondition
from .model import ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, train

SCHEMA_VERSION = 1
STAGES = ("gen", "bpe", "battery", "train", "eval", "hbm", "probe")

DESK_CONDITIONS = ("regular", "scrambled", "feature_swap")
DESK_SEEDS = (42, 123)
FULL_CONDITIONS = tuple(c.value for c in CorpusCondition)
FULL_SEEDS = (42, 123, 456, 789, 1001)
FULL_SIZES = ("tiny", "small", "medium")


def data_root(override: Path | None = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get("WUGLAB_DATA_DIR", "data"))


@dataclass(frozen=True)
class RunSpec:
    condition: str
    size_tag: str = "tiny"
    seed: int = 42
    fraction: float = 1.0

    def __post_init__(self):
        CorpusCondition(self.condition)  # validates
        if self.size_tag not in ("tiny", "small", "medium"):
            raise ValueError(f"unknown size {self.size_tag}")
        if self.fraction not in (0.25, 0.5, 1.0):
            raise ValueError("fraction must be 0.25, 0.5, or 1.0")

    @property
    def run_id(self) -> str:
        rid = f"{self.condition}-{self.size_tag}-s{self.seed}"
        if self.fraction != 1.0:
            rid += f"-f{int(self.fraction * 100)}"
        return rid

    @property
    def condition_label(self) -> str:
        """Condition string used in result rows; fractions get a suffix."""
        if self.fraction != 1.0:
            return f"{self.condition}@{int(self.fraction * 100)}"
        return self.condition

    def run_dir(self, root: Path) -> Path:
        d = Path(root) / "runs" / self.condition / self.size_tag / str(self.seed)
        if self.fraction != 1.0:
            d = d / f"f{int(self.fraction * 100)}"
        return d


def desk_matrix() -> list[RunSpec]:
    return [
        RunSpec(condition=c, size_tag="tiny", seed=s)
        for c in DESK_CONDITIONS
        for s in DESK_SEEDS
    ]


def full_matrix() -> list[RunSpec]:
    specs = [
        RunSpec(condition=c, size_tag=z, seed=s)
        for c in FULL_CONDITIONS
        for z in FULL_SIZES
        for s in FULL_SEEDS
    ]
    # Dose-response additions: Regular Tiny at 25% and 50% fractions.
    specs += [
        RunSpec(condition="regular", size_tag="tiny", seed=s, fraction=f)
        for s in FULL_SEEDS
        for f in (0.25, 0.5)
    ]
    return specs


# ---------------------------------------------------------------------------
# Registry


def _hash_bytes(data: bytes) -> str:
    return hashlib.md5(data).hexdigest()


def _hash_obj(obj) -> str:
    return _hash_bytes(json.dumps(obj, sort_keys=True).encode())


def _hash_dir(path: Path) -> str:
    path = Path(path)
    if not path.exists():
        return "missing"
    entries = []
    for f in sorted(path.rglob("*")):
        if f.is_file():
            entries.append((str(f.relative_to(path)), _hash_bytes(f.read_bytes())))
    return _hash_obj(entries)


class RunRegistry:
    """Per-stage completion ledger persisted via atomic file replacement."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.path = self.root / "registry.json"
        self.records: dict[str, dict] = {}
        if self.path.exists():
            self.records = json.loads(self.path.read_text())

    def _save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.records, sort_keys=True, indent=1))
        tmp.replace(self.path)

    def key(self, spec: RunSpec, stage: str) -> str:
        return f"{spec.run_id}/{stage}"

    def needs_run(self, spec: RunSpec, stage: str, input_hash: str, out_dir: Path) -> bool:
        rec = self.records.get(self.key(spec, stage))
        if rec is None or rec.get("status") != "ok":
            return True
        if rec["input_hash"] != input_hash:
            return True
        return _hash_dir(out_dir) != rec["output_hash"]

    def record(self, spec: RunSpec, stage: str, input_hash: str, out_dir: Path,
               seconds: float, status: str = "ok", error: str = "") -> None:
        self.records[self.key(spec, stage)] = {
            "schema": SCHEMA_VERSION,
            "input_hash": input_hash,
            "output_hash": _hash_dir(out_dir),
            "seconds": round(seconds, 3),
            "status": status,
            "error": error,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self._save()


# ---------------------------------------------------------------------------
# Stage implementations


def _stage_gen(spec: RunSpec, out_dir: Path) -> None:
    cspec = corpusgen.build_spec(
        CorpusCondition(spec.condition), spec.seed, fraction=spec.fraction
    )
    corpus = corpusgen.generate_corpus(cspec)
    corpusgen.save_corpus(corpus, out_dir)


def _stage_bpe(spec: RunSpec, run_dir: Path, out_dir: Path) -> None:
    corpus = corpusgen.load_corpus(run_dir / "gen")
    model = bpelib.fit_corpus_bpe(corpus)
    bpelib.save_bpe(model, out_dir / "bpe.json")


def _stage_battery(spec: RunSpec, run_dir: Path, out_dir: Path) -> None:
    corpus = corpusgen.load_corpus(run_dir / "gen")
    bat = batterylib.build_battery(corpus, spec.seed)
    violations = batterylib.validate_battery(bat, corpus)
    if violations:
        raise RuntimeError(f"battery validation failed: {violations[:5]}")
    batterylib.save_battery(bat, out_dir / "battery.json")


def _stage_train(spec: RunSpec, run_dir: Path, out_dir: Path, batch_size: int) -> None:
    corpus = corpusgen.load_corpus(run_dir / "gen")
    bm = bpelib.load_bpe(run_dir / "bpe" / "bpe.json")
    seqs = [
        [bpelib.BOS_ID] + bpelib.encode(bm, s) + [bpelib.EOS_ID]
        for s in corpus.sentences
    ]
    cfg = ModelConfig.for_size(spec.size_tag, vocab_size=bm.vocab_size)
    tc = TrainConfig.for_size(spec.size_tag, seed=spec.seed, batch_size=batch_size)
    ckpt, log = train(seqs, cfg, tc)
    save_checkpoint(ckpt, out_dir / "model.ckpt")
    with open(out_dir / "train_log.csv", "w") as f:
        f.write("step,loss,lr\n")
        f.writelines(f"{s},{l},{r}\n" for s, l, r in log)


def _stage_eval(spec: RunSpec, run_dir: Path, out_dir: Path) -> None:
    bm = bpelib.load_bpe(run_dir / "bpe" / "bpe.json")
    bat = batterylib.load_battery(run_dir / "battery" / "battery.json")
    ckpt = load_checkpoint(run_dir / "train" / "model.ckpt")
    rows = evaluate.run_forced_choice(
        ckpt, bat, bm,
        run_id=spec.run_id,
        condition=spec.condition_label,
        size_tag=spec.size_tag,
        seed=spec.seed,
    )
    evaluate.write_results_csv(rows, out_dir / "results.csv")
    (out_dir / "aggregate.json").write_text(
        json.dumps(evaluate.aggregate(rows), sort_keys=True, indent=1)
    )
    greedy = evaluate.greedy_diagnostics(ckpt, bat, bm)
    (out_dir / "greedy.json").write_text(json.dumps(greedy, sort_keys=True, indent=1))
    one_shot = evaluate.run_one_shot(ckpt, bat, bm)
    (out_dir / "one_shot.json").write_text(json.dumps(one_shot, sort_keys=True, indent=1))


def _stage_hbm(spec: RunSpec, run_dir: Path, out_dir: Path) -> None:
    corpus = corpusgen.load_corpus(run_dir / "gen")
    counts, beta, kind_ids = hbmlib.shape_counts(corpus)
    hbmlib.write_counts_csv(counts, kind_ids, out_dir / "counts.csv")
    post = hbmlib.fit_posterior(counts, beta)
    hbmlib.save_posterior(post, out_dir / "posterior.json")
    preds = hbmlib.novel_kind_predictives(corpus, post)
    bat = batterylib.load_battery(run_dir / "battery" / "battery.json")
    rows = evaluate.read_results_csv(run_dir / "eval" / "results.csv")
    kl = hbmlib.hbm_forced_choice_kl(rows, preds, bat)
    kl["mean_alpha"] = post.mean_alpha
    (out_dir / "kl_report.json").write_text(json.dumps(kl, sort_keys=True, indent=1))


def _stage_probe(spec: RunSpec, run_dir: Path, out_dir: Path) -> None:
    corpus = corpusgen.load_corpus(run_dir / "gen")
    bm = bpelib.load_bpe(run_dir / "bpe" / "bpe.json")
    bat = batterylib.load_battery(run_dir / "battery" / "battery.json")
    ckpt = load_checkpoint(run_dir / "train" / "model.ckpt")

    export = evaluate.export_hidden_states(
        ckpt, bat, bm, corpus, item_types=(ItemType.FIRST_ORDER,),
        positions=("critical",),
    )
    evaluate.save_hidden_states(export, out_dir)
    kind_ids = [rec["kind_id"] for rec in export["index"]]
    feats = export["critical"]  # (n_items, n_layers+1, d_model)

    layer_rows = []
    per_layer_acc = []
    for layer in range(feats.shape[1]):
        ds = probelib.make_probe_dataset(feats[:, layer], kind_ids, corpus)
        res = probelib.train_probe(ds)
        per_layer_acc.append(res.accuracy)
        layer_rows.append({
            "condition": spec.condition_label, "size_tag": spec.size_tag,
            "seed": spec.seed, "layer": layer, "accuracy": res.accuracy,
            "baseline": "", "p_value": "",
        })
    best_layer = int(np.argmax(per_layer_acc))
    ds = probelib.make_probe_dataset(feats[:, best_layer], kind_ids, corpus)
    ctrl = probelib.permutation_test(ds, seed=spec.seed)
    layer_rows[best_layer]["baseline"] = ctrl.baseline_mean
    layer_rows[best_layer]["p_value"] = ctrl.p_value
    probelib.write_probe_csv(layer_rows, out_dir / "probe.csv")

    before, after = probelib.perturbation_experiment(ckpt, bm, corpus, seed=spec.seed)
    probelib.write_cosine_csv(
        {f"{spec.run_id}:before": before, f"{spec.run_id}:after": after},
        out_dir / "cosine.csv",
    )
    summary = {
        "best_layer": best_layer,
        "best_accuracy": per_layer_acc[best_layer],
        "baseline_mean": ctrl.baseline_mean,
        "permutation_p": ctrl.p_value,
        "cosine_before": asdict(before),
        "cosine_after": asdict(after),
    }
    (out_dir / "probe_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1))


def run_one(spec: RunSpec, root: Path, registry: RunRegistry,
            stages: tuple[str, ...] = STAGES, batch_size: int = 8,
            log=print) -> None:
    run_dir = spec.run_dir(root)
    upstream: dict[str, str] = {}
    for stage in STAGES:
        out_dir = run_dir / stage
        if stage == "gen":
            input_hash = _hash_obj([asdict(spec), "gen", SCHEMA_VERSION])
        elif stage in ("bpe", "battery"):
            input_hash = _hash_obj([upstream["gen"], stage, spec.seed])
        elif stage == "train":
            input_hash = _hash_obj([upstream["gen"], upstream["bpe"],
                                    spec.size_tag, spec.seed, batch_size])
        elif stage == "eval":
            input_hash = _hash_obj([upstream["train"], upstream["battery"], upstream["bpe"]])
        elif stage == "hbm":
            input_hash = _hash_obj([upstream["gen"], upstream["eval"], upstream["battery"]])
        else:  # probe
            input_hash = _hash_obj([upstream["train"], upstream["battery"], upstream["gen"]])
        if stage not in stages:
            upstream[stage] = _hash_dir(out_dir)
            continue
        if not registry.needs_run(spec, stage, input_hash, out_dir):
            upstream[stage] = registry.records[registry.key(spec, stage)]["output_hash"]
            continue
        log(f"[{spec.run_id}] {stage} ...")
        out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        try:
            if stage == "gen":
                _stage_gen(spec, out_dir)
            elif stage == "bpe":
                _stage_bpe(spec, run_dir, out_dir)
            elif stage == "battery":
                _stage_battery(spec, run_dir, out_dir)
            elif stage == "train":
                _stage_train(spec, run_dir, out_dir, batch_size)
            elif stage == "eval":
                _stage_eval(spec, run_dir, out_dir)
            elif stage == "hbm":
                _stage_hbm(spec, run_dir, out_dir)
            elif stage == "probe":
                _stage_probe(spec, run_dir, out_dir)
        except Exception as exc:
            registry.record(spec, stage, input_hash, out_dir,
                            time.time() - t0, status="failed", error=repr(exc))
            raise
        registry.record(spec, stage, input_hash, out_dir, time.time() - t0)
        upstream[stage] = registry.records[registry.key(spec, stage)]["output_hash"]


def run_matrix(specs: list[RunSpec], root: Path, batch_size: int = 8,
               log=print) -> RunRegistry:
    registry = RunRegistry(root)
    for spec in specs:
        try:
            run_one(spec, root, registry, batch_size=batch_size, log=log)
        except Exception as exc:  # isolate failures per run
            log(f"[{spec.run_id}] FAILED: {exc!r}")
    return registry


# ---------------------------------------------------------------------------
# Report bundle


def _load_all(root: Path, specs: list[RunSpec]):
    """Collect per-run artifacts, skipping runs with missing stages."""
    runs = []
    missing = []
    for spec in specs:
        run_dir = spec.run_dir(root)
        try:
            rows = evaluate.read_results_csv(run_dir / "eval" / "results.csv")
            agg = json.loads((run_dir / "eval" / "aggregate.json").read_text())
            greedy = json.loads((run_dir / "eval" / "greedy.json").read_text())
            kl = json.loads((run_dir / "hbm" / "kl_report.json").read_text())
            probe = json.loads((run_dir / "probe" / "probe_summary.json").read_text())
        except FileNotFoundError as exc:
            missing.append({"run_id": spec.run_id, "missing": str(exc)})
            continue
        runs.append({"spec": spec, "rows": rows, "agg": agg, "greedy": greedy,
                     "kl": kl, "probe": probe})
    return runs, missing


def emit_reports(root: Path, specs: list[RunSpec], out_dir: Path | None = None) -> Path:
    """Write the report bundle: accuracy table, verdicts, figure CSVs, manifest."""
    root = Path(root)
    out_dir = Path(out_dir) if out_dir else root / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    runs, missing = _load_all(root, specs)

    cells: dict[str, dict] = {}
    for r in runs:
        cells.update(r["agg"])

    # Accuracy table: mean SO accuracy (%) per condition x size across seeds.
    by_cond_size: dict[tuple, list[float]] = {}
    for c in cells.values():
        if c["item_type"] == "second_order":
            by_cond_size.setdefault((c["condition"], c["size_tag"]), []).append(c["accuracy"])
    with open(out_dir / "accuracy_table.csv", "w") as f:
        f.write("condition,size_tag,n_seeds,so_accuracy_pct_mean,so_accuracy_pct_sd\n")
        for (cond, size), vals in sorted(by_cond_size.items()):
            f.write(f"{cond},{size},{len(vals)},{100 * np.mean(vals):.1f},"
                    f"{100 * np.std(vals, ddof=1) if len(vals) > 1 else 0:.1f}\n")

    reg_kls = [r["kl"]["mean_kl_nats"] for r in runs
               if r["spec"].condition == "regular" and r["spec"].fraction == 1.0]
    kl_nats = float(np.mean(reg_kls)) if reg_kls else None
    verdicts = statslib.evaluate_hypotheses(cells, kl_nats=kl_nats)
    (out_dir / "hypotheses.json").write_text(json.dumps(verdicts, sort_keys=True, indent=1))

    # Figure data CSVs.
    with open(out_dir / "fig1_so_distributions.csv", "w") as f:
        f.write("condition,size_tag,seed,accuracy\n")
        for c in cells.values():
            if c["item_type"] == "second_order":
                f.write(f"{c['condition']},{c['size_tag']},{c['seed']},{c['accuracy']}\n")
    with open(out_dir / "fig2_fo_so.csv", "w") as f:
        f.write("run_id,condition,size_tag,seed,fo_accuracy,so_accuracy\n")
        for r in runs:
            fo = [c["accuracy"] for c in r["agg"].values() if c["item_type"] == "first_order"]
            so = [c["accuracy"] for c in r["agg"].values() if c["item_type"] == "second_order"]
            s = r["spec"]
            f.write(f"{s.run_id},{s.condition_label},{s.size_tag},{s.seed},"
                    f"{fo[0]},{so[0]}\n")
    with open(out_dir / "fig3_swap.csv", "w") as f:
        f.write("condition,size_tag,seed,item_type,accuracy\n")
        for c in cells.values():
            if c["item_type"] in ("swap_frame_cued", "swap_noun_only"):
                f.write(f"{c['condition']},{c['size_tag']},{c['seed']},"
                        f"{c['item_type']},{c['accuracy']}\n")
    with open(out_dir / "fig4_item_types.csv", "w") as f:
        f.write("condition,size_tag,seed,item_type,n,accuracy\n")
        for c in cells.values():
            f.write(f"{c['condition']},{c['size_tag']},{c['seed']},"
                    f"{c['item_type']},{c['n']},{c['accuracy']}\n")
    with open(out_dir / "fig5_alpha.csv", "w") as f:
        f.write("condition,seed,mean_alpha\n")
        for r in runs:
            s = r["spec"]
            if s.fraction == 1.0:
                f.write(f"{s.condition},{s.seed},{r['kl']['mean_alpha']}\n")
    with open(out_dir / "fig6_probe_layers.csv", "w") as f:
        f.write("condition,size_tag,seed,layer,accuracy,baseline,p_value\n")
        for r in runs:
            s = r["spec"]
            probe_csv = s.run_dir(root) / "probe" / "probe.csv"
            for line in probe_csv.read_text().splitlines()[1:]:
                f.write(line + "\n")
    with open(out_dir / "fig7_cosine.csv", "w") as f:
        f.write("run,layer,within_trained,within_novel,cross\n")
        for r in runs:
            s = r["spec"]
            cos_csv = s.run_dir(root) / "probe" / "cosine.csv"
            for line in cos_csv.read_text().splitlines()[1:]:
                f.write(line + "\n")

    manifest = {
        "schema": SCHEMA_VERSION,
        "runs": [r["spec"].run_id for r in runs],
        "missing": missing,
        "files": {},
        "registry_hashes": {},
    }
    registry = RunRegistry(root)
    for r in runs:
        for stage in STAGES:
            key = registry.key(r["spec"], stage)
            if key in registry.records:
                manifest["registry_hashes"][key] = registry.records[key]["output_hash"]
    for f in sorted(out_dir.glob("*.csv")) + [out_dir / "hypotheses.json"]:
        manifest["files"][f.name] = _hash_bytes(f.read_bytes())
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return out_dir
