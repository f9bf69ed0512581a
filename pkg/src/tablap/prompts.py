"""Built-in prompt templates for every model role."""

from __future__ import annotations

from .gateway import PromptTemplate

NUMSOLVER_TEMPLATE = PromptTemplate(
    id="numsolver",
    body="""\
You are given a table and a question about the data in the table.

Table:
{table_flat}

Question: {question}

Work through the question step by step:
1. Explain your reasoning, including any intermediate values you compute.
2. Write one self-contained Python script that computes the answer. Inline
   the table values the script needs as Python literals; do not read any
   file. The script must print exactly one line: the final answer and
   nothing else.
3. Finish with the answer you obtained from your own reasoning.

Report plain values without units or thousands separators.

Format your reply exactly as:
Reasoning: <your step-by-step reasoning>
```python
<your script>
```
Final Answer: <your answer>""",
)

SOTA_BRANCH_TEMPLATE = PromptTemplate(
    id="sota_branch",
    body="""\
Answer the question using the table below. Think step by step, then give
the answer on its own final line. Report plain values without units.
If the answer has several parts, separate them with " | ".

Table:
{table_flat}

Question: {question}

End your reply with:
Final Answer: <your answer>""",
)

ANS_SELECTOR_TEMPLATE = PromptTemplate(
    id="ans_selector",
    body="""\
Two models answered the same question about a table. Decide which answer
is correct. You see only the table title and column headers, the
question, and each model's answer with its reasoning.

{table_schema}

Question: {question}

Answer A: {ans_a}
Reasoning A: {rsn_a}

Answer B: {ans_b}
Reasoning B: {rsn_b}

Reply with [A] if answer A is correct, or [B] if answer B is correct.""",
)

TW_EVALUATOR_TEMPLATE = PromptTemplate(
    id="tw_evaluator",
    body="""\
A question about a table was answered by two models. Judge whether the
final selected answer is trustworthy, based on the table title and column
headers, the question, and both candidate answers with their reasoning.

{table_schema}

Question: {question}

Answer A: {ans_a}
Reasoning A: {rsn_a}

Answer B: {ans_b}
Reasoning B: {rsn_b}

Reply with [True] if the selected answer is likely correct, or [False]
if it is likely wrong.""",
)

FTQ_EXTRACTOR_TEMPLATE = PromptTemplate(
    id="ftq_extractor",
    body="""\
Extract the key entities that directly answer the question from the long
answer below. Drop every word that does not answer the question. Return
the entities exactly as written, separated by ", ", with no extra text.

Question: {question}
Long answer: {long_answer}

Entities:""",
)

DEFAULT_TEMPLATES: dict[str, PromptTemplate] = {
    "numsolver": NUMSOLVER_TEMPLATE,
    "sota_branch": SOTA_BRANCH_TEMPLATE,
    "ans_selector": ANS_SELECTOR_TEMPLATE,
    "tw_evaluator": TW_EVALUATOR_TEMPLATE,
    "ftq_extractor": FTQ_EXTRACTOR_TEMPLATE,
}
