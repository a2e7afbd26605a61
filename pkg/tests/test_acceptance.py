"""Acceptance suite: one test per release criterion, each printing a pass
line. Tolerances are pinned here and nowhere else. Run with `pytest -s
tests/test_acceptance.py` to see the per-criterion lines."""

from __future__ import annotations

import json

import random
import time

import pytest

from llmcoder.corpus import estimate_tokens
from llmcoder.evalmetrics import (
    RatingsMatrix,
    accuracy,
    cohens_kappa,
    confusion,
    icc,
    krippendorff_alpha,
    precision_recall_f1,
)
from llmcoder.gateway import (
    FaultScript,

    ReplayBackend,
    SimulatedClock,
    SlidingWindowLimiter,
    estimate_cost,
)
from llmcoder.pipeline import run
from llmcoder.promptbook import (
    parse_promptbook,
    render_prompt,
    schema_of,
    validate_record,
)
from llmcoder.robustness import (
    RunArtifact,
    RunSet,
    inter_model_agreement,
    inter_prompt_stability,
    intra_prompt_stability,
)

from .conftest import make_book, make_corpus
from .oracles import (
    alpha_bruteforce,
    icc_two_way_oracle,
    sliding_window_violations_fast,
)
from .test_evalmetrics import random_rows
from .test_pipeline import make_gateway
from .test_robustness import fabricate_run


def passed(n: int, text: str) -> None:
    print(f"ACCEPTANCE {n:02d}: PASS - {text}", flush=True)


def test_criterion_01_alpha_oracle_equivalence():
    rng = random.Random(20240501)
    started = time.monotonic()
    checked = 0
    target = 1000
    while checked < target:
        for scale in ("nominal", "ordinal", "interval"):
            rows = random_rows(
                rng, max_units=8, max_raters=4, max_values=4, missing_rate=0.3,
                numeric=scale != "nominal",
            )
            try:
                expected = alpha_bruteforce(rows, scale)
            except ValueError:
                continue
            got = krippendorff_alpha(RatingsMatrix.from_rows(rows, scale)).value
            assert abs(got - expected) <= 1e-9, (scale, rows, got, expected)
            checked += 1
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    passed(1, f"{checked} random matrices x3 scales within 1e-9 of the pairwise oracle in {elapsed:.1f}s")


def test_criterion_02_kappa_and_icc():
    assert cohens_kappa(["A", "B", "C", "A"], ["A", "B", "C", "A"]).value == 1.0
    balanced = cohens_kappa(["A", "A", "B", "B"], ["A", "B", "A", "B"]).value
    assert abs(balanced) <= 1e-12
    rng = random.Random(77)
    for _ in range(200):
        n = rng.randint(2, 10)
        k = rng.randint(2, 5)
        matrix = [[rng.uniform(-10, 10) for _ in range(k)] for _ in range(n)]
        assert abs(icc(matrix).value - icc_two_way_oracle(matrix)) <= 1e-9
    passed(2, "kappa exact on identity/balanced data; ICC(2,1) within 1e-9 of ANOVA oracle on 200 matrices")


def test_criterion_03_classification_identities():
    rng = random.Random(5150)
    for _ in range(1000):
        n = rng.randint(1, 50)
        labels = "abcd"[: rng.randint(2, 4)]
        gold = [rng.choice(labels) for _ in range(n)]
        pred = [rng.choice(labels) for _ in range(n)]
        cm = confusion(gold, pred)
        micro = precision_recall_f1(cm, average="micro")
        acc = accuracy(cm)
        assert micro.precision == micro.recall == micro.f1
        assert abs(micro.f1 - acc) <= 1e-12
        macro = precision_recall_f1(cm, average="macro")
        for scores in macro.per_class.values():
            if not scores.zero_denominator:
                assert min(scores.precision, scores.recall) - 1e-12 <= scores.f1
                assert scores.f1 <= max(scores.precision, scores.recall) + 1e-12
    passed(3, "micro P=R=F1=accuracy and min(P,R)<=F1<=max(P,R) over 1000 random confusions")


def test_criterion_04_reference_prompt_golden_render(reference_book_source):
    pb1 = parse_promptbook(reference_book_source)
    pb2 = parse_promptbook(reference_book_source)
    r1, r2 = render_prompt(pb1), render_prompt(pb2)
    assert (r1.system, r1.user_template) == (r2.system, r2.user_template)
    assert r1.user_template.encode("utf-8") == r2.user_template.encode("utf-8")
    assert "Return **ONLY** a JSON array of objects" in r1.user_template
    manual_lines = [l for l in r1.user_template.splitlines() if l.startswith("- ")]
    names = [v.name for v in pb1.variables]
    assert len(manual_lines) == 21
    assert [l.split(" = ")[0][2:] for l in manual_lines] == names
    schema = schema_of(pb1)
    assert len(schema.fields) == 21
    assert schema.names == tuple(names)
    passed(4, "21 manual lines in order, exact output directive, 21-field schema, byte-stable")


ACCEPT_BOOK = make_book(
    [
        {"name": "AN_FLAG", "task": "annotation", "instruction": "Flag? (1/0).", "type": "binary"},
        {
            "name": "SU_QUOTE",
            "task": "summarization",
            "instruction": "Verbatim snippet. Return N/A if none.",
            "type": "string",
            "verbatim": True,
        },
        {"name": "IE_LEVEL", "task": "extraction", "instruction": "Level as decimal.", "type": "decimal"},
    ]
)


def _corpus_100():
    return make_corpus(
        {f"doc{i:03d}": f"text unit {i} holds level {i % 7} of flagged material" for i in range(100)}
    )


def _clean_directive(doc):
    snippet = " ".join(doc.text.split()[:3])
    payload = [{"AN_FLAG": 1, "SU_QUOTE": snippet, "IE_LEVEL": 1.5}]
    return {"kind": "respond", "text": json.dumps(payload)}


def _faulty_script(corpus):
    """10% malformed-JSON first attempts, 5% transient rate limits, 2% timeouts."""
    docs = {d.id: [_clean_directive(d)] for d in corpus}
    ids = sorted(docs)
    malformed = ids[0:10]
    rate_limited = ids[10:15]
    timed_out = ids[15:17]
    for doc_id in malformed:
        docs[doc_id] = [{"kind": "malformed_json"}] + docs[doc_id]
    for doc_id in rate_limited:
        docs[doc_id] = [{"kind": "rate_limit"}] + docs[doc_id]
    for doc_id in timed_out:
        docs[doc_id] = [{"kind": "timeout"}] + docs[doc_id]
    return FaultScript(docs=docs), malformed, rate_limited, timed_out


def test_criterion_05_strict_parsing_contract(tmp_path):
    corpus = _corpus_100()
    pb = parse_promptbook(ACCEPT_BOOK)
    script, malformed, rate_limited, timed_out = _faulty_script(corpus)
    gateway = make_gateway(script)
    started = time.monotonic()
    result = run(corpus, pb, gateway, tmp_path / "out", backend_kind="mock")
    elapsed = time.monotonic() - started
    assert elapsed < 30.0

    counts = result.manifest.counts
    assert sum(counts.values()) == 100
    assert counts["ok"] == 100

    # retried_ok accounting: the rate-limited and timed-out docs retried once
    # at transport level (call #1), the malformed docs recovered via re-ask
    # (call #2); nothing else carries a retry mark
    retried = {r.call_id: r.status.retries for r in result.records if r.status.state == "retried_ok"}
    expected = {f"{doc_id}#1": 1 for doc_id in rate_limited + timed_out}
    expected.update({f"{doc_id}#2": 1 for doc_id in malformed})
    assert retried == expected

    # malformed first attempts recovered by re-ask, never silent repair:
    # the non-JSON raw is preserved and a second call record exists
    by_doc: dict = {}
    for rec in result.records:
        by_doc.setdefault(rec.doc_id, []).append(rec)
    for doc_id in malformed:
        assert len(by_doc[doc_id]) == 2
        first, second = by_doc[doc_id]
        with pytest.raises(Exception):
            json.loads(first.raw_output)
        assert result.table.rows[doc_id].call_id == second.call_id
    for doc_id in set(by_doc) - set(malformed):
        assert len(by_doc[doc_id]) == 1

    # exit codes through the CLI contract: clean -> 0, terminal failures -> 3
    from llmcoder.cli import main

    book_path = tmp_path / "book.json"
    book_path.write_text(ACCEPT_BOOK, encoding="utf-8")
    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    for d in corpus:
        (corpus_dir / f"{d.id}.txt").write_text(d.text, encoding="utf-8")
    script_dict = {"docs": {d.id: [_clean_directive(d)] for d in corpus}}
    script_dict["docs"]["doc000"] = [{"kind": "malformed_json"}]  # malformed twice -> failed_parse
    script_path = tmp_path / "faults.json"
    script_path.write_text(json.dumps(script_dict), encoding="utf-8")
    code = main(
        [
            "run", "--promptbook", str(book_path), "--corpus", str(corpus_dir),
            "--model", "mock-model", "--backend", "mock",
            "--fault-script", str(script_path), "--out", str(tmp_path / "cli_out"),
            "--rpm", "1000000", "--tpm", "1000000000",
        ]
    )
    assert code == 3
    passed(5, f"100/100 rows with injected faults, exact retried_ok accounting, exit codes honest, {elapsed:.1f}s")


def test_criterion_06_resume_and_worker_determinism(tmp_path):
    corpus = _corpus_100()
    pb = parse_promptbook(ACCEPT_BOOK)
    script, *_ = _faulty_script(corpus)
    run(corpus, pb, make_gateway(script), tmp_path / "recorded", backend_kind="mock")
    log = tmp_path / "recorded" / "raw_log.jsonl"

    def replay_gateway():
        return make_gateway(ReplayBackend.from_file(log))

    full = run(corpus, pb, replay_gateway(), tmp_path / "full", backend_kind="replay")
    partial = run(
        corpus, pb, replay_gateway(), tmp_path / "resumed", backend_kind="replay", stop_after=40
    )
    assert partial.interrupted and len(partial.table.rows) == 40
    run(corpus, pb, replay_gateway(), tmp_path / "resumed", backend_kind="replay", resume=True)
    resumed_bytes = (tmp_path / "resumed" / "table.csv").read_bytes()
    full_bytes = (tmp_path / "full" / "table.csv").read_bytes()
    assert resumed_bytes == full_bytes

    w1 = run(corpus, pb, replay_gateway(), tmp_path / "w1", backend_kind="replay", workers=1)
    w8 = run(corpus, pb, replay_gateway(), tmp_path / "w8", backend_kind="replay", workers=8)
    assert (tmp_path / "w1" / "table.csv").read_bytes() == (tmp_path / "w8" / "table.csv").read_bytes()
    assert w1.manifest.counts == w8.manifest.counts == full.manifest.counts
    passed(6, "40%-interrupt resume byte-identical; workers=1 and workers=8 tables byte-identical")


def test_criterion_07_verbatim_anti_hallucination():
    rng = random.Random(424242)
    book = parse_promptbook(
        make_book(
            [
                {
                    "name": "SU_Q",
                    "task": "summarization",
                    "instruction": "Quote.",
                    "type": "string",
                    "verbatim": True,
                }
            ]
        )
    )
    schema = schema_of(book)
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    cases = []
    for i in range(400):
        doc = " ".join(rng.choice(words) for _ in range(40))
        tokens = doc.split()
        start = rng.randrange(0, len(tokens) - 6)
        span = tokens[start : start + 5]
        if i % 2 == 0:
            value = " ".join(span)  # true contiguous slice
            cases.append((doc, value, False))
        else:
            corrupted = span[:2] + ["qzvnx"] + span[2:]  # token absent from any doc
            cases.append((doc, " ".join(corrupted), True))
    false_negatives = 0
    false_positives = 0
    for doc, value, injected in cases:
        rec = validate_record(schema, {"SU_Q": value}, doc)
        flagged = any(v.kind == "verbatim_mismatch" for v in rec.violations)
        if injected and not flagged:
            false_negatives += 1
        if not injected and flagged:
            false_positives += 1
    assert false_negatives == 0
    assert false_positives == 0
    passed(7, "400 generated cases: injected-token half all flagged, true-substring half all clean")


def test_criterion_08_rate_limit_conformance():
    clock = SimulatedClock()
    rpm, tpm = 23, 1700
    limiter = SlidingWindowLimiter(rpm_limit=rpm, tpm_limit=tpm, clock=clock)
    rng = random.Random(31337)
    adversarial = [0, 1, 2, tpm, tpm - 1, tpm // 2, tpm // 2 + 1, 3, 100]
    grants = []
    for i in range(10_000):
        tokens = adversarial[i % len(adversarial)] if i % 3 else rng.randrange(0, tpm + 1)
        permit = limiter.acquire(tokens)
        grants.append((permit.granted_at, tokens))
        if rng.random() < 0.1:
            clock.advance(rng.uniform(0.0, 5.0))
    assert len(grants) == 10_000
    violations = sliding_window_violations_fast(grants, rpm, tpm)
    assert violations == []
    passed(8, "10000 simulated acquisitions with adversarial sizes; no 60s window exceeded RPM or TPM")


def test_criterion_09_robustness_protocols(tmp_path):
    pb = parse_promptbook(ACCEPT_BOOK.replace('"verbatim": true', '"verbatim": false'))
    corpus = make_corpus({f"d{i:02d}": f"document {i}" for i in range(12)})
    values = {
        d.id: {"AN_FLAG": i % 2, "SU_QUOTE": f"snippet {i % 3}", "IE_LEVEL": float(i)}
        for i, d in enumerate(corpus)
    }

    # K identical replay runs -> every coefficient 1.0
    first = fabricate_run(tmp_path, "seedrun", pb, corpus, values)
    log = tmp_path / "seedrun" / "raw_log.jsonl"
    replays = []
    for k in range(3):
        gw = make_gateway(ReplayBackend.from_file(log))
        run(corpus, pb, gw, tmp_path / f"rep{k}", backend_kind="replay")
        replays.append(RunArtifact.load(tmp_path / f"rep{k}"))
    report = intra_prompt_stability(RunSet(runs=replays, axis="repeat"))
    for name in ("AN_FLAG", "SU_QUOTE", "IE_LEVEL"):
        assert report.per_variable[name].value == pytest.approx(1.0, abs=1e-12)

    # half-disagreement variant drives that variable's PSS to the oracle value
    flag_book = parse_promptbook(
        make_book([{"name": "AN_FLAG", "task": "annotation", "instruction": "f?", "type": "binary"}])
    )
    eight = make_corpus({f"u{i}": f"text {i}" for i in range(8)})
    base_vals = [0, 0, 0, 0, 1, 1, 1, 1]
    var_vals = [1, 1, 0, 0, 0, 0, 1, 1]
    baseline = fabricate_run(
        tmp_path, "pss_base", flag_book, eight,
        {d.id: {"AN_FLAG": base_vals[i]} for i, d in enumerate(eight)},
    )
    variant = fabricate_run(
        tmp_path, "pss_var", flag_book, eight,
        {d.id: {"AN_FLAG": var_vals[i]} for i, d in enumerate(eight)},
    )
    pss_report = inter_prompt_stability(
        RunSet(runs=[baseline, variant], axis="prompt_variant", baseline="pss_base")
    )
    oracle = alpha_bruteforce([[b, v] for b, v in zip(base_vals, var_vals)], "nominal")
    assert abs(pss_report.per_variable["AN_FLAG"].value - oracle) <= 1e-9

    # PSS symmetric under variant-order permutation (baseline stays designated)
    twin = fabricate_run(
        tmp_path, "pss_twin", flag_book, eight,
        {d.id: {"AN_FLAG": base_vals[i]} for i, d in enumerate(eight)},
    )
    fwd = inter_prompt_stability(
        RunSet(runs=[baseline, variant, twin], axis="prompt_variant", baseline="pss_base")
    )
    rev = inter_prompt_stability(
        RunSet(runs=[twin, baseline, variant], axis="prompt_variant", baseline="pss_base")
    )
    assert fwd.overall["pss"] == pytest.approx(rev.overall["pss"], abs=1e-12)
    assert fwd.overall["pss"] == pytest.approx((oracle + 1.0) / 2, abs=1e-9)

    # permutation symmetry across all three protocols
    models = []
    for k, model_id in enumerate(("model-a", "model-b", "model-c")):
        mutated = {key: dict(v) for key, v in values.items()}
        if k == 2:
            mutated["d03"]["AN_FLAG"] = 1 - mutated["d03"]["AN_FLAG"]
        models.append(
            fabricate_run(tmp_path, f"model{k}", pb, corpus, mutated, model_id=model_id)
        )
    base_intra = intra_prompt_stability(RunSet(runs=replays, axis="repeat"))
    base_model = inter_model_agreement(RunSet(runs=models, axis="model"))
    rng = random.Random(8)
    for _ in range(3):
        reps = replays[:]
        rng.shuffle(reps)
        shuffled_intra = intra_prompt_stability(RunSet(runs=reps, axis="repeat"))
        mods = models[:]
        rng.shuffle(mods)
        shuffled_model = inter_model_agreement(RunSet(runs=mods, axis="model"))
        for name in base_intra.per_variable:
            assert shuffled_intra.per_variable[name].value == pytest.approx(
                base_intra.per_variable[name].value, abs=1e-12
            )
            assert shuffled_model.per_variable[name].value == pytest.approx(
                base_model.per_variable[name].value, abs=1e-12
            )
    passed(9, "identical replays score 1.0 everywhere; PSS hits the oracle to 1e-9; protocols permutation-symmetric")


def test_criterion_10_token_and_cost_arithmetic():
    assert estimate_tokens("hello world again") == 4
    assert estimate_tokens(" ".join(["w"] * 750)) == 1000
    book = parse_promptbook(
        make_book([{"name": "AN_X", "task": "annotation", "instruction": "x?", "type": "binary"}])
    )
    rng = random.Random(64)
    for _ in range(50):
        n_docs = rng.randint(0, 20)
        corpus = make_corpus({f"d{i}": "tok " * rng.randint(1, 500) for i in range(n_docs)})
        config = make_gateway(FaultScript()).config
        from dataclasses import replace

        config = replace(
            config,
            price_in=rng.uniform(0, 20),
            price_out=rng.uniform(0, 80),
            max_output_tokens=rng.randint(1, 2000),
        )
        est = estimate_cost(corpus, book, config)
        closed_form = (
            est.input_tokens * config.price_in / 1e6
            + n_docs * config.max_output_tokens * config.price_out / 1e6
        )
        assert abs(est.cost - closed_form) <= 1e-12
        assert est.input_tokens == sum(
            est.prompt_overhead_tokens + d.token_estimate for d in corpus
        )
    passed(10, "token heuristic exact on 3->4 and 750->1000; cost matches closed form to 1e-12")
