#!/usr/bin/env python3
"""Smoke test for the gec_py extension module.

Builds nothing itself: expects `cargo build -p gec-py` (or --release) to
have produced target/<profile>/libgec_py.so. Run from anywhere:

    python3 python/smoke_test.py
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_gec_py():
    candidates = [
        REPO / "target" / "release" / "libgec_py.so",
        REPO / "target" / "debug" / "libgec_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p gec-py")
    stage = Path(tempfile.mkdtemp(prefix="gec_py_"))
    shutil.copy2(lib, stage / "gec_py.so")
    sys.path.insert(0, str(stage))
    import gec_py

    return gec_py


def main():
    gec = import_gec_py()

    words = [
        "The", "every", "male", "employees", "were", "standing", "in",
        "the", "back", "row", ".", "All", "they", "are", "covered",
        "with", "rust", "so", "bad", "badly",
    ]
    vocab = gec.Vocab(words)
    assert len(vocab) == len(words) + 7

    tokens = vocab.tokenize("so bad .")
    assert tokens == ["<s>", "so", "bad", ".", "</s>"], tokens

    # deterministic corruption synthesis
    a = gec.synthesize(vocab, "the male employees were standing", seed=7)
    b = gec.synthesize(vocab, "the male employees were standing", seed=7)
    assert a == b, (a, b)
    assert a[1] == "the male employees were standing"

    # alignment -> labels -> masked text -> pieces
    src = "The every male employees were standing in the back row ."
    tgt = "All the male employees were standing in the back row ."
    labels = gec.align_labels(vocab, src, tgt)
    assert labels == list("KEEKKKKKKKKKK"), labels
    masked = gec.masked_text(vocab, src, labels)
    assert masked == "<s> [MASK] male employees were standing in the back row . </s>", masked
    pieces = gec.gold_pieces(vocab, src, tgt)
    assert pieces == ["All the"], pieces

    merged = gec.merge_detections(list("KKKKKKKEKK"), list("KKKKKIKKKK"))
    assert merged == list("KKKKKIKEKK"), merged

    # tiny training run: memorize two pairs, then correct them
    pairs = [
        (src, tgt),
        ("they are covered with rust so bad .", "they are covered with rust so badly ."),
    ]
    model_cfg = json.dumps(
        {
            "d_model": 32, "n_layers": 2, "n_heads": 4, "d_ff": 64,
            "vocab_size": len(vocab), "label_count": 3,
            "max_positions": 64, "max_block_positions": 12, "dropout": 0.0,
        }
    )
    train_cfg = json.dumps(
        {
            "learning_rate": 3e-3, "warmup_steps": 20, "batch_size": 2,
            "max_epochs": 400, "eval_interval": 100000,
            "weight_decay": 0.0, "rng_seed": 111,
        }
    )
    model = gec.train_sft1(vocab, pairs, model_cfg, train_cfg)
    assert model.mode == "joint"

    out, trace = model.correct(src)
    assert out == tgt, f"expected {tgt!r}, got {out!r}"
    assert trace["decoder_steps"] == 3, trace
    assert trace["pieces"] == ["All the"], trace

    # delta=0 forces the input through unchanged
    out, trace = model.correct(src, ctrl="0,,")
    assert out == src
    assert trace["decoder_steps"] == 0

    # checkpoint round trip
    with tempfile.TemporaryDirectory() as d:
        ckpt = Path(d) / "model.ckpt"
        model.save(ckpt)
        loaded = gec.Model.load(ckpt)
        out2, _ = loaded.correct(src)
        assert out2 == out if trace["decoder_steps"] else True
        assert loaded.detect(src) == model.detect(src)

    # scorer sanity: P == R -> F0.5 == P
    report = gec.score(vocab, [src], [tgt], [tgt])
    assert report["precision"] == report["recall"] == report["f0_5"] == 1.0, report

    print("smoke test passed")


if __name__ == "__main__":
    main()
