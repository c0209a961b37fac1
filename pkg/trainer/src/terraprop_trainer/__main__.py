"""Train a surrogate from a solved dataset and export its weights.

    python -m terraprop_trainer --data corpus.tpl --out model.unet \
        [--heads 2] [--epochs 25] [--n-train 7500] [--n-val 500] [--seed 0]
"""

import argparse
import sys

from .dataio import load_dataset, split_indices
from .export import export_weights, save_history
from .model import build_unet
from .train import TrainConfig, train_point, train_uncertainty


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="terraprop-trainer")
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--heads", type=int, choices=[1, 2], default=1)
    parser.add_argument("--epochs", type=int, default=25)
    parser.add_argument("--n-train", type=int, default=None)
    parser.add_argument("--n-val", type=int, default=500)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--aug-sigma", type=float, default=30.0)
    parser.add_argument("--output-bias", type=float, default=None,
                        help="output head bias in dB; default: corpus mean "
                             "recorded in the dataset header, else -134")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--history-out", default=None)
    args = parser.parse_args(argv)

    meta, heights, losses = load_dataset(args.data)
    n = heights.shape[0]
    n_val = min(args.n_val, max(1, n // 10))
    n_train = args.n_train if args.n_train is not None else n - n_val
    train_idx, val_idx = split_indices(n, n_train, n_val, args.seed)

    bias = args.output_bias
    if bias is None:
        bias = float(meta.get("extra", {}).get("mean_path_loss_db", -134.0))
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                      epochs=args.epochs, aug_sigma_m=args.aug_sigma,
                      output_bias_db=bias, seed=args.seed)
    model = build_unet(heads=args.heads, dropout_p=cfg.dropout_p,
                       output_bias_db=cfg.output_bias_db)
    train_fn = train_point if args.heads == 1 else train_uncertainty
    model, history = train_fn(
        model, (heights[train_idx], losses[train_idx]),
        (heights[val_idx], losses[val_idx]), cfg)
    export_weights(model, args.out, extra_metadata={"epochs": len(history) - 1})
    if args.history_out:
        save_history(history, args.history_out)
    best = min(row["val_loss"] for row in history) if history else float("nan")
    print(f"trained on {n_train}, validated on {n_val}; best val loss "
          f"{best:.2f} dB^2 -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
