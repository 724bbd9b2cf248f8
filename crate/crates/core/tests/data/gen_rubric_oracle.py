"""Writes rubric_oracle_3obj.csv: expected points for every error-count cell
of a prompt with three object types, one rubric line at a time."""

N_OBJECTS = 3


def points(a, r, m, e):
    if m == N_OBJECTS:
        return 1
    if m + r > 2:
        return 2
    if m + r >= 1:
        return 3
    if a > 2:
        return 4
    if a >= 1:
        return 5
    if e >= 1:
        return 6
    return 7


with open("rubric_oracle_3obj.csv", "w") as f:
    f.write("attribute,relation,omission,extraneous,points\n")
    for a in range(6):
        for r in range(6):
            for m in range(6):
                for e in range(6):
                    f.write(f"{a},{r},{m},{e},{points(a, r, m, e)}\n")
