"""Drive the script-execution runner through its JSON envelope: a clean
run, a blocked import, a timeout, and workdir isolation."""

import sys

from tablap.sandbox import SandboxRequest, SubprocessSandbox

RUNNER = f"{sys.executable} -m sandbox_runner"


def show(label, result):
    print(f"{label}:")
    print(f"  exit={result.exit_code} timed_out={result.timed_out} "
          f"duration={result.duration_ms}ms")
    if result.stdout:
        print(f"  stdout: {result.stdout.strip()!r}")
    if result.stderr:
        print(f"  stderr: {result.stderr.strip().splitlines()[-1]!r}")


def main():
    sandbox = SubprocessSandbox(runner_cmd=RUNNER)

    probe = sandbox.execute(SandboxRequest(script="print('ready')"))
    if probe.exit_code == 127:
        print("sandbox-runner is not installed; run: pip install -e sandbox-runner")
        return

    show("arithmetic", sandbox.execute(SandboxRequest(
        script="values = [845, 745, 678]\nprint(max(values) - min(values))")))

    show("\nallowed import (statistics)", sandbox.execute(SandboxRequest(
        script="import statistics\nprint(statistics.mean([10500, 9200, 11000]))")))

    show("\nblocked import (socket)", sandbox.execute(SandboxRequest(
        script="import socket\nprint('never printed')")))

    show("\ntimeout (1s budget)", sandbox.execute(SandboxRequest(
        script="while True: pass", timeout_s=1)))

    first = sandbox.execute(SandboxRequest(script="open('state.txt', 'w').write('x')\nprint('wrote file')"))
    second = sandbox.execute(SandboxRequest(script=(
        "try:\n    open('state.txt')\n    print('leaked')\n"
        "except FileNotFoundError:\n    print('fresh workdir')"
    )))
    show("\nisolation, first run", first)
    show("isolation, second run", second)


if __name__ == "__main__":
    main()
