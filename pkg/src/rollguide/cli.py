"""Command-line front end.

Commands: sample | edit | rules | eval | train | verify.  A JSON config
file may supply any flag's value; explicit flags win.  The resolved
configuration is echoed into the output directory for provenance.
"""

import argparse
import json
import os
import sys

import numpy as np

from .errors import FormatError, ParameterError, RollguideError
from .guidance import (GuidanceConfig, ddpm_sample, edit_sample,
                       scg_ddpm_sample, scg_sddim_sample, uniform_taus,
                       write_diagnostics)
from .metrics import (chroma_similarity, groove_similarity, oa_report_json,
                      overlapping_area, seven_attributes)
from .pianoroll_io import (load_roll, midi_to_roll, pitch_range_mask,
                           roll_to_midi, save_roll, time_window_mask)
from .rules import (DEFAULT_RULE_WEIGHTS, RuleGuidanceLoss, extract_target,
                    targets_from_json, targets_to_json,
                    threshold_postprocess)
from .schedule import (DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_T,
                       make_linear_schedule)
from .scores import (DenoiserScoreModel, GmmScoreModel, GmmSpec, TrainConfig,
                     load_denoiser, save_denoiser, train_denoiser)
from .verification import run_all


def _add_shared(p):
    p.add_argument("--backend", help="gmm JSON file or trained denoiser file")
    p.add_argument("--schedule", default=None,
                   help="T,beta1,betaT (default 1000,1e-4,0.02)")
    p.add_argument("--n", type=int, default=1,
                   help="candidates per guided step")
    p.add_argument("--guide", default="750:0",
                   help="guided step window start:end")
    p.add_argument("--every-k", type=int, default=1,
                   help="guide every k-th step inside the window")
    p.add_argument("--selection", default="argmax",
                   help="argmax or softmax:K")
    p.add_argument("--weights", default=None,
                   help="rule loss weights ph,nd,cp")
    p.add_argument("--rules", default=None,
                   help="rule target JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--diagnostics", default=None,
                   help="path for per-step diagnostics JSONL")
    p.add_argument("--eta", type=float, default=1.0,
                   help="stochasticity of the strided sampler")
    p.add_argument("--steps", type=int, default=None,
                   help="use a strided subsequence of this length")
    p.add_argument("--stop-at-t", type=int, default=0,
                   help="stop early and return the clean estimate")
    p.add_argument("--num-samples", type=int, default=1)
    p.add_argument("--config", default=None,
                   help="JSON file of flag defaults (flags override)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rollguide",
        description="Rule-guided diffusion sampling for symbolic music")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="draw (optionally guided) samples")
    _add_shared(ps)

    pe = sub.add_parser("edit", help="regenerate part of a roll")
    _add_shared(pe)
    pe.add_argument("--source", required=True, help="source roll (.pr01/.mid)")
    pe.add_argument("--noise-level", type=int, required=True,
                    help="diffusion level K the source is pushed to")
    pe.add_argument("--edit-frames", default=None, help="frame window a:b")
    pe.add_argument("--edit-pitches", default=None, help="pitch window a:b")

    pr = sub.add_parser("rules", help="extract rule targets from a file")
    _add_shared(pr)
    pr.add_argument("--input", required=True, help="MIDI or .pr01 file")

    pv = sub.add_parser("eval", help="objective metrics over sample sets")
    _add_shared(pv)
    pv.add_argument("--set-a", default=None, help="directory of .pr01 files")
    pv.add_argument("--set-b", default=None, help="directory of .pr01 files")
    pv.add_argument("--pair", nargs=2, default=None,
                    help="two rolls for chroma/groove similarity")

    pt = sub.add_parser("train", help="fit the toy denoiser backend")
    _add_shared(pt)
    pt.add_argument("--data", required=True, help="directory of .pr01 files")
    pt.add_argument("--train-steps", type=int, default=1500)
    pt.add_argument("--batch-size", type=int, default=16)
    pt.add_argument("--atoms", type=int, default=16)
    pt.add_argument("--init-scale", type=float, default=0.05)

    pc = sub.add_parser("verify", help="run the verification battery")
    _add_shared(pc)
    pc.add_argument("--only", nargs="*", default=None,
                    help="restrict to the named checks")
    # sub-command parsers carry their own defaults, so config-file defaults
    # must be pushed into each of them as well
    parser.subcommand_parsers = [ps, pe, pr, pv, pt, pc]
    return parser


def _apply_config_file(parser, argv):
    """Seed parser defaults from --config so explicit flags override."""
    if "--config" in argv:
        path = argv[argv.index("--config") + 1]
        with open(path) as f:
            doc = json.load(f)
        defaults = {k.replace("-", "_"): v for k, v in doc.items()}
        parser.set_defaults(**defaults)
        for sub in getattr(parser, "subcommand_parsers", []):
            sub.set_defaults(**defaults)


def _parse_schedule(spec):
    if spec is None:
        return make_linear_schedule(DEFAULT_T, DEFAULT_BETA_START,
                                    DEFAULT_BETA_END)
    parts = spec.split(",")
    if len(parts) != 3:
        raise ParameterError(f"--schedule wants T,beta1,betaT, got {spec!r}")
    return make_linear_schedule(int(parts[0]), float(parts[1]),
                                float(parts[2]))


def _parse_selection(spec):
    if spec == "argmax":
        return "argmax", 1.0
    if spec.startswith("softmax"):
        _, _, k = spec.partition(":")
        return "softmax", float(k) if k else 1.0
    raise ParameterError(f"unknown selection {spec!r}")


def _parse_window(spec):
    a, _, b = spec.partition(":")
    return int(a), int(b)


def _guidance_config(args, sched):
    start, end = _parse_window(args.guide)
    selection, temp = _parse_selection(args.selection)
    return GuidanceConfig(n=args.n, guide_start_t=min(start, sched.T),
                          guide_end_t=end, every_k=args.every_k,
                          selection=selection, temperature_K=temp,
                          stop_at_t=args.stop_at_t)


def _load_backend(path, sched):
    if path is None:
        raise ParameterError("--backend is required for this command")
    with open(path, "rb") as f:
        head = f.read(4)
    if head == b"RGDN":
        return DenoiserScoreModel(load_denoiser(path), sched)
    with open(path) as f:
        return GmmScoreModel(GmmSpec.from_json(f.read()), sched)


def _load_rule_loss(args):
    if args.rules is None:
        return None
    with open(args.rules) as f:
        targets = targets_from_json(f.read())
    if args.weights is not None:
        by_kind = dict(zip(("PH", "ND", "CP"),
                           (float(w) for w in args.weights.split(","))))
        weights = [by_kind[t.kind] for t in targets]
    else:
        weights = [DEFAULT_RULE_WEIGHTS[t.kind] for t in targets]
    return RuleGuidanceLoss(targets, weights)


def _ensure_out(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items()
                if k not in ("command", "func") and v is not None}
    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump(resolved, f, indent=2, default=str)
    return out


def _read_source_roll(path, frames=None):
    if path.endswith(".pr01"):
        return load_roll(path)
    with open(path, "rb") as f:
        data = f.read()
    if frames is None:
        probe = midi_to_roll(data, 4096)
        sounding = np.flatnonzero(probe.velocity.any(axis=0))
        last = int(sounding[-1]) + 1 if len(sounding) else 1
        frames = max(128, -(-last // 128) * 128)
    return midi_to_roll(data, frames)


def _write_samples(out, x0, provider, diagnostics, args):
    if getattr(provider, "kind", "") == "learned-denoiser" and \
            len(provider.sample_shape) == 3:
        for i, raw in enumerate(x0):
            roll = threshold_postprocess(raw)
            save_roll(roll, os.path.join(out, f"sample_{i:03d}.pr01"))
            with open(os.path.join(out, f"sample_{i:03d}.mid"), "wb") as f:
                f.write(roll_to_midi(roll))
    else:
        with open(os.path.join(out, "samples.csv"), "w") as f:
            for row in np.atleast_2d(x0):
                f.write(",".join(f"{v!r}" for v in np.ravel(row)) + "\n")
    if args.diagnostics:
        write_diagnostics(diagnostics, args.diagnostics)


def cmd_sample(args):
    sched = _parse_schedule(args.schedule)
    provider = _load_backend(args.backend, sched)
    loss = _load_rule_loss(args)
    config = _guidance_config(args, sched)
    out = _ensure_out(args)
    if loss is None and config.n > 1:
        raise ParameterError("guided sampling (--n > 1) needs --rules")
    if args.steps is not None:
        taus = uniform_taus(sched.T, args.steps)
        x0, diag = scg_sddim_sample(provider, sched, loss or _zero_loss,
                                    config, args.eta, taus, args.seed,
                                    num_samples=args.num_samples)
    elif loss is None:
        x0, diag = ddpm_sample(provider, sched, args.seed,
                               num_samples=args.num_samples), []
    else:
        x0, diag = scg_ddpm_sample(provider, sched, loss, config, args.seed,
                                   num_samples=args.num_samples)
    _write_samples(out, x0, provider, diag, args)
    return 0


def _zero_loss(x):
    return 0.0


def cmd_edit(args):
    sched = _parse_schedule(args.schedule)
    provider = _load_backend(args.backend, sched)
    loss = _load_rule_loss(args)
    config = _guidance_config(args, sched)
    out = _ensure_out(args)
    roll = _read_source_roll(args.source)
    from .rules import encode_roll
    source = encode_roll(roll)
    if args.edit_frames:
        a, b = _parse_window(args.edit_frames)
        mask = time_window_mask(roll.frames, a, b)
    elif args.edit_pitches:
        a, b = _parse_window(args.edit_pitches)
        mask = pitch_range_mask(roll.frames, a, b)
    else:
        raise ParameterError("give --edit-frames or --edit-pitches")
    flat = edit_sample(_flatten_provider(provider), sched, source.ravel(),
                       mask.ravel(), args.noise_level, loss_fn=_wrap_flat(
                           loss, source.shape),
                       config=config, rng_seed=args.seed)
    edited = threshold_postprocess(flat.reshape(source.shape))
    save_roll(edited, os.path.join(out, "edited.pr01"))
    with open(os.path.join(out, "edited.mid"), "wb") as f:
        f.write(roll_to_midi(edited))
    return 0


class _FlatProvider:
    """View of a provider whose sample axis is flattened to one dimension."""

    def __init__(self, inner):
        self.inner = inner
        self.sample_shape = (int(np.prod(inner.sample_shape)),)
        self.kind = getattr(inner, "kind", "")

    def eps(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        full = x.reshape(x.shape[:-1] + tuple(self.inner.sample_shape))
        return self.inner.eps(full, t).reshape(x.shape)


def _flatten_provider(provider):
    if len(provider.sample_shape) == 1:
        return provider
    return _FlatProvider(provider)


def _wrap_flat(loss, shape):
    if loss is None:
        return None

    def wrapped(flat):
        return loss(np.asarray(flat).reshape(shape))
    return wrapped


def cmd_rules(args):
    roll = _read_source_roll(args.input)
    targets = [extract_target(roll, kind) for kind in ("PH", "ND", "CP")]
    text = targets_to_json(targets)
    if args.out:
        out = _ensure_out(args)
        with open(os.path.join(out, "targets.json"), "w") as f:
            f.write(text)
    else:
        print(text)
    return 0


def _load_set(directory):
    rolls = sorted(f for f in os.listdir(directory) if f.endswith(".pr01"))
    if not rolls:
        raise ParameterError(f"no .pr01 files under {directory}")
    return [seven_attributes(load_roll(os.path.join(directory, f)))
            for f in rolls]


def cmd_eval(args):
    if args.pair:
        a = _read_source_roll(args.pair[0])
        b = _read_source_roll(args.pair[1])
        report = json.dumps({"chroma_similarity": chroma_similarity(a, b),
                             "groove_similarity": groove_similarity(a, b)},
                            indent=2)
    elif args.set_a and args.set_b:
        report = oa_report_json(
            overlapping_area(_load_set(args.set_a), _load_set(args.set_b)))
    else:
        raise ParameterError("give --set-a/--set-b or --pair")
    if args.out:
        out = _ensure_out(args)
        with open(os.path.join(out, "metrics.json"), "w") as f:
            f.write(report)
    else:
        print(report)
    return 0


def cmd_train(args):
    from .rules import encode_roll
    sched = _parse_schedule(args.schedule)
    out = _ensure_out(args)
    files = sorted(f for f in os.listdir(args.data) if f.endswith(".pr01"))
    if not files:
        raise ParameterError(f"no .pr01 files under {args.data}")
    dataset = [encode_roll(load_roll(os.path.join(args.data, f)))
               for f in files]
    config = TrainConfig(steps=args.train_steps, batch_size=args.batch_size,
                         atoms=args.atoms, init_scale=args.init_scale)
    denoiser = train_denoiser(dataset, sched, config, rng_seed=args.seed)
    path = os.path.join(out, "denoiser.bin")
    save_denoiser(denoiser, path)
    print(f"wrote {path} (final loss "
          f"{denoiser.train_meta['final_loss']:.4f})")
    return 0


def cmd_verify(args):
    results = run_all(names=args.only)
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.name}: {res.detail}")
        failed += not res.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


_COMMANDS = {"sample": cmd_sample, "edit": cmd_edit, "rules": cmd_rules,
             "eval": cmd_eval, "train": cmd_train, "verify": cmd_verify}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (RollguideError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
