import pytest

ACCEPTANCE = {
    1: "solver matches the reference QP",
    2: "Horvitz-Thompson gradient is unbiased",
    3: "Scenario I MSE and accuracy anchor",
    4: "optimal probabilities beat uniform",
    5: "MSE decays like 1/n",
    6: "timing trend",
    7: "probability-vector properties",
    8: "approximate normality of the estimate",
    9: "CASP-schema pipeline",
}

_key = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_key] = {}


@pytest.fixture
def acceptance(request):
    """``acceptance(num, ok, detail)`` records and prints one criterion verdict."""
    log = request.config.stash[_key]

    def record(num, ok, detail=""):
        log[num] = (bool(ok), detail)
        print(f"\nACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {ACCEPTANCE[num]} | {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_key, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for num, name in ACCEPTANCE.items():
        if num in log:
            ok, detail = log[num]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {name}: {detail}")
        else:
            terminalreporter.write_line(f"[NOT RUN] {num}. {name}")
