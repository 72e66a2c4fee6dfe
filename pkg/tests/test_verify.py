import time

from unimatch.cli import main
from unimatch.verification import verify_suite


def test_verify_suite_clean_and_fast():
    t0 = time.perf_counter()
    checks = verify_suite()
    elapsed = time.perf_counter() - t0
    for c in checks:
        assert c.ok, f"{c.name}: {c.detail}"
    assert elapsed < 60


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    assert "6/6 checks passed" in capsys.readouterr().out
