"""Command line: train the three model checkpoints and serve the protocol."""

from __future__ import annotations

import argparse
import sys

from modelserver.config import ServerConfig, Stage1Config, TrainerConfig
from modelserver.editor import finetune_editor
from modelserver.predictor import load_dataset, load_predictor, train_predictor
from modelserver.scorer import train_scorer


def _trainer_from(args) -> TrainerConfig:
    return TrainerConfig(epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.lr, dim=args.dim, seed=args.seed)


def cmd_train_predictor(args) -> int:
    data = load_dataset(args.data)
    train_predictor(data, args.out, _trainer_from(args))
    print(f"classifier checkpoint -> {args.out}")
    return 0


def cmd_finetune_editor(args) -> int:
    data = load_dataset(args.data)
    if args.limit:
        data = data[: args.limit]
    stage1 = Stage1Config(masking=args.masking, label_mode=args.label_mode,
                          epochs=args.epochs, batch_size=args.batch_size,
                          learning_rate=args.lr, seed=args.seed)
    predictor = load_predictor(args.predictor) if args.predictor else None
    finetune_editor(data, args.out, stage1, predictor,
                    TrainerConfig(dim=args.dim, seed=args.seed))
    print(f"editor checkpoint -> {args.out} "
          f"({args.masking} masking, {args.label_mode} labels)")
    return 0


def cmd_train_scorer(args) -> int:
    data = load_dataset(args.data)
    train_scorer(data, args.out, _trainer_from(args))
    print(f"scorer checkpoint -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from modelserver.app import build_app

    cfg = ServerConfig(predictor_ckpt=args.predictor, editor_ckpt=args.editor,
                       scorer_ckpt=args.scorer, device=args.device,
                       max_seq_len=args.max_seq_len, aggregation=args.agg,
                       port=args.port, queue_size=args.queue_size)
    app = build_app(cfg)
    uvicorn.run(app, host=args.host, port=cfg.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modelserver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_train(p):
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--epochs", type=int, default=8)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-predictor", help="train the classification checkpoint")
    common_train(p)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("finetune-editor",
                       help="build masked-reconstruction pairs and fine-tune the infiller")
    common_train(p)
    p.add_argument("--predictor", help="classifier checkpoint (needed for gradient masking)")
    p.add_argument("--masking", choices=["gradient", "random"], default="gradient")
    p.add_argument("--label-mode", choices=["pred", "gold"], default="pred")
    p.add_argument("--limit", type=int, help="use only the first N examples")
    p.set_defaults(func=cmd_finetune_editor, epochs=10, batch_size=8, lr=3e-4)

    p = sub.add_parser("train-scorer", help="train the masked-LM fluency scorer")
    common_train(p)
    p.set_defaults(func=cmd_train_scorer)

    p = sub.add_parser("serve", help="serve the /v1 protocol")
    p.add_argument("--predictor", required=True)
    p.add_argument("--editor", required=True)
    p.add_argument("--scorer")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-seq-len", type=int, default=512)
    p.add_argument("--agg", choices=["sum", "max"], default="sum")
    p.add_argument("--queue-size", type=int, default=8)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
