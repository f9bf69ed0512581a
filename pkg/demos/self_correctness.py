"""The answer-merge rule of the numerical branch, case by case.

A generated script's executed answer beats the model's direct answer only
when execution succeeded and the script answer is numeric (or the two
agree); execution failures always fall back to the direct answer.
"""

from tablap.sandbox import ExecResult
from tablap.solver import parse_solver_response, resolve_answer

raw_completion = """\
Reasoning: Average the Attendance column: (10500 + 9200 + 11000) / 3.
```python
print((10500 + 9200 + 11000) / 3)
```
Final Answer: 10175.0
"""

parsed = parse_solver_response(raw_completion)
print("script:", parsed.script)
print("direct answer:", parsed.direct_answer)

cases = [
    ("script wins on numeric disagreement",
     parsed.direct_answer, ExecResult(stdout="10233.333333333334\n", exit_code=0)),
    ("agreement keeps script provenance",
     "10233.33", ExecResult(stdout="10233.33\n", exit_code=0)),
    ("execution error falls back to direct",
     parsed.direct_answer, ExecResult(stderr="ZeroDivisionError", exit_code=1)),
    ("non-numeric script output defers to direct",
     "Stamford Bridge", ExecResult(stdout="stadium unknown\n", exit_code=0)),
    ("timeout falls back to direct",
     parsed.direct_answer, ExecResult(stderr="killed", exit_code=-9, timed_out=True)),
]

for label, direct, exec_result in cases:
    answer, provenance = resolve_answer(direct, exec_result)
    print(f"\n{label}:")
    print(f"  direct={direct!r}  exit={exec_result.exit_code}  -> {answer!r} ({provenance})")
