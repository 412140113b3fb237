"""Monte Carlo split robustness for each learner on a synthetic match set.

Builds a next-point-victor task from synthetic matches, runs repeated 70/30
splits per learner and writes mc_<model>.json plus density_<model>.svg.

    python3 scripts/mc_robustness.py --n 200 --out-dir runs/mc
"""

import argparse
from pathlib import Path

from momentumlab import svg
from momentumlab.cli import build_target, learner_recipe, prepare
from momentumlab.ingest import dataset_from_records
from momentumlab.simlab import SynthMatchConfig, generate_match, monte_carlo
from momentumlab._parallel import derive_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matches", type=int, default=3)
    ap.add_argument("--points", type=int, default=150)
    ap.add_argument("--coupling", type=float, default=0.3)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--ratio", type=float, default=0.7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", default="svm,rf,gbt,logistic")
    ap.add_argument("--out-dir", default="mc_robustness")
    args = ap.parse_args()

    records = []
    for j in range(args.matches):
        cfg = SynthMatchConfig(n_points=args.points, momentum_coupling=args.coupling,
                               seed=derive_seed(args.seed, j), match_id=f"synth-{j + 1:03d}")
        records.extend(generate_match(cfg))
    cleaned, fm, _ = prepare(dataset_from_records(records), 0.10)
    fm, y = build_target(cleaned, fm, "next-point-victor")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    print(f"{fm.rows} rows, {len(fm.names)} features, {args.n} splits per model")
    print(f"{'model':<10} {'mean':>7} {'std':>7} {'q05':>7} {'q95':>7}")
    for name in args.models.split(","):
        rep = monte_carlo(learner_recipe(name, args.seed, 10), fm, y, n=args.n, ratio=args.ratio,
                          master_seed=args.seed, model_id=name)
        rep.write_json(out / f"mc_{name}.json")
        d = rep.density
        chart = svg.density_chart(d.grid if d else None, d.values if d else None, rep.hist.edges,
                                  rep.hist.counts, f"{name} accuracy over {args.n} splits", "accuracy")
        (out / f"density_{name}.svg").write_text(chart, encoding="utf-8")
        s = rep.summary
        print(f"{name:<10} {s['mean']:>7.3f} {s['std']:>7.3f} {s['q05']:>7.3f} {s['q95']:>7.3f}")


if __name__ == "__main__":
    main()
