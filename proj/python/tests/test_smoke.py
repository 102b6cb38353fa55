import json
import math
import os
import pathlib

import pytest

import solrepair

FIXTURES = pathlib.Path(os.environ.get("SOLREPAIR_FIXTURES", pathlib.Path(__file__).parents[2] / "tests" / "fixtures"))

SRC = """// SPDX-License-Identifier: MIT
pragma solidity ^0.8.0;

contract Pay {
    uint256 public feeRate;

    /// @notice fee owed on an amount
    function fee(uint256 amount) public view returns (uint256) {
        return amount * feeRate / 10000;
    }

    function bare() public pure returns (uint256) {
        return 1;
    }
}
"""


def test_version():
    assert solrepair.__version__ == "0.3.0"


def test_pass_at_k_matches_closed_form():
    for n in range(1, 8):
        for c in range(n + 1):
            for k in range(1, n + 1):
                expected = 1.0 - (math.comb(n - c, k) / math.comb(n, k))
                assert solrepair.pass_at_k_estimate(n, c, k) == pytest.approx(expected, abs=1e-12)
    assert solrepair.pass_at_k([(1, 1), (1, 0)], 1) == pytest.approx(50.0)
    with pytest.raises(solrepair.InvalidArgument):
        solrepair.pass_at_k([(1, 1)], 2)


def test_bleu_values():
    assert solrepair.bleu("return a + b ;", "return a + b ;") == pytest.approx(100.0)
    trivial = solrepair.trivially_shared_ngrams(["return a ;", "return b ;"], 2)
    assert len(trivial) == 2
    s = solrepair.crystal_bleu("return a + b ;", "return a - b ;", trivial)
    assert 0.0 <= s <= solrepair.bleu("return a + b ;", "return a - b ;") + 1e-9


def test_pearson_and_cost():
    assert solrepair.pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(solrepair.UndefinedCorrelation):
        solrepair.pearson([1, 1, 1], [1, 2, 3])
    assert solrepair.cost(1_000_000, 1_000_000) == pytest.approx(0.75)


def test_extract_and_inject():
    funcs = solrepair.extract_functions(SRC, "pay.sol")
    names = [f["name"] for f in funcs]
    assert "fee" in names
    fee = funcs[names.index("fee")]
    assert "feeRate" in fee["body"]
    injected = solrepair.inject_verification_statement(fee["body"])
    assert injected != fee["body"]
    with pytest.raises(solrepair.Error):
        solrepair.extract_functions("contract {", "broken.sol")


def test_retrieve_finds_declaration():
    lines = SRC.splitlines()
    hits = solrepair.retrieve("return amount * fee_rate / 10000;", lines, "lcs", 2)
    assert hits
    assert any("feeRate" in h["text"] for h in hits)
    for method in ("bm25", "tfidf", "jaccard", "dense"):
        out = solrepair.retrieve("feeRate", lines, method, 3)
        assert len(out) <= 3
    with pytest.raises(solrepair.Error):
        solrepair.retrieve("x", lines, "grep", 1)


def test_build_run_report(tmp_path):
    rar = FIXTURES / "rar50"
    tasks = tmp_path / "tasks.jsonl"
    stats = solrepair.build(str(rar / "src"), str(tasks))
    assert stats["retained"] == 50
    assert len(tasks.read_text().splitlines()) == 50

    def config(label, retrieval):
        return {
            "label": label,
            "task_file": str(tasks),
            "source_root": str(rar / "src"),
            "out_dir": str(tmp_path / label),
            "model": {"mock_client": str(rar / "mock_client.json")},
            "executor": {"backend": "mock", "mock_file": str(rar / "mock_executor.json")},
            "retrieval": retrieval,
            "repair": {"max_rounds": 1 if retrieval else 0},
            "workers": 2,
        }

    base = solrepair.run(config("base", None))
    assert base["exit_code"] == 0
    assert base["sessions_run"] == 50
    rar_run = solrepair.run(config("rar", {"method": "lcs"}))
    assert rar_run["exit_code"] == 0

    rep = solrepair.report([str(tmp_path / "base"), str(tmp_path / "rar")], [1])
    by_label = {row["label"]: row for row in rep["doc"]["rows"]}
    assert by_label["base"]["pass_at_k"]["1"] == pytest.approx(40.0)
    assert by_label["rar"]["pass_at_k"]["1"] == pytest.approx(80.0)
    assert "80.00" in rep["table"]

    bad = config("rar", None)
    with pytest.raises(solrepair.ConfigError):
        solrepair.run(bad)
