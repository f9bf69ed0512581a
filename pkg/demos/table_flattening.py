"""Walk through table ingestion: rectangularization, flattening with
escaping, round-trip recovery, and numerical-question detection."""

from tablap.table import (
    Question,
    flatten_table,
    is_numerical_question,
    parse_table,
    unflatten_table,
)

ragged_grid = [
    ["Rider", "Country", "Points"],
    ["Sylvain Geboers", "Belgium", "845"],
    ["Mark Blackwell", "USA"],                      # short row -> padded
    ["Brad Lackey", "USA", "678", "extra-cell"],    # long row  -> clipped
    ["Pipe | in name", "It\nly", "745"],            # needs escaping
]

parsed = parse_table(ragged_grid, title="1971 Trans-AMA final standings")
print("ingest warnings:")
for w in parsed.warnings:
    print("  -", w)

flat = flatten_table(parsed.table)
print("\nflattened (goes verbatim into prompts):")
print(flat)

recovered = unflatten_table(flat, title=parsed.table.title)
print("\nround-trip exact:", recovered.rows == parsed.table.rows)

print("\nquestion classification:")
for text in (
    "Which country had the most riders that placed in the top 20?",
    "What is the average number of points?",
    "Who directed the film?",
):
    flag, hits = is_numerical_question(Question(text))
    detail = ", ".join(f"{h.keyword} x{h.count}" for h in hits) or "-"
    print(f"  {'numerical    ' if flag else 'non-numerical'}  {text}  [{detail}]")
