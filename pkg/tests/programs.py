"""Hypothesis strategies producing pulse-program text."""

from hypothesis import strategies as st

KEYWORDS = {"channel", "seg", "sync", "let", "fine", "eps", "dur", "offset"}
_HEAD = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_"
_TAIL = _HEAD + "0123456789"
idents = st.builds(lambda h, t: h + t, st.sampled_from(_HEAD),
                   st.text(alphabet=_TAIL, max_size=6)).filter(lambda s: s not in KEYWORDS)


def _number(min_value, max_value):
    return st.one_of(
        st.integers(min_value, max_value).map(str),
        st.decimals(min_value, max_value, places=3, allow_nan=False, allow_infinity=False)
        .map(lambda d: format(d, "f")),
    )


@st.composite
def segment_line(draw, allow_fine):
    label = draw(idents)
    eps = draw(st.one_of(st.tuples(_number(-300, 300), st.sampled_from(["GHz", ""])).map("".join),
                         idents))
    dur = draw(st.one_of(st.tuples(_number(0, 2000), st.sampled_from(["ps", ""])).map("".join),
                         idents))
    fine = allow_fine and draw(st.booleans())
    parts = [f"eps={eps}", f"dur={dur}"]
    if draw(st.booleans()):
        parts.reverse()
    if fine:
        parts.insert(draw(st.integers(0, 2)), "fine")
    pad = draw(st.sampled_from([" ", "  ", "\t"]))
    return f"seg{pad}{label} " + " ".join(parts), fine


@st.composite
def program_text(draw):
    lines = []
    lets = draw(st.lists(idents, max_size=3, unique=True))
    for name in lets:
        lines.append(f"let {name} = {draw(_number(-500, 500))}{draw(st.sampled_from(['GHz', 'ps']))}")
    names = draw(st.lists(idents, min_size=0, max_size=3, unique=True))
    syncs = []
    for name in names:
        lines.append(f"channel {name}")
        has_fine = False
        for _ in range(draw(st.integers(0, 5))):
            text, fine = draw(segment_line(not has_fine))
            has_fine = has_fine or fine
            lines.append(text)
            if draw(st.booleans()):
                lines.append("# " + draw(st.text(alphabet="abc xyz=#", max_size=10)))
        if draw(st.booleans()):
            syncs.append(f"sync {name} offset={draw(_number(0, 1000))}ps")
    lines += syncs
    return "\n".join(lines) + draw(st.sampled_from(["", "\n", "\n\n"]))


def random_program_text(rng):
    """Seeded generator over the same grammar, for bulk checks."""

    def ident():
        while True:
            name = rng.choice(list(_HEAD)) + "".join(
                rng.choice(list(_TAIL), size=int(rng.integers(0, 7))))
            if name not in KEYWORDS:
                return name

    def number(lo, hi):
        if rng.random() < 0.5:
            return str(int(rng.integers(lo, hi + 1)))
        return f"{rng.uniform(lo, hi):.3f}"

    lines = [f"let {ident()} = {number(-500, 500)}{rng.choice(['GHz', 'ps'])}"
             for _ in range(int(rng.integers(0, 3)))]
    syncs = []
    for name in dict.fromkeys(ident() for _ in range(int(rng.integers(0, 4)))):
        lines.append(f"channel {name}")
        has_fine = False
        for _ in range(int(rng.integers(0, 6))):
            eps = number(-300, 300) + rng.choice(["GHz", ""]) if rng.random() < 0.7 else ident()
            dur = number(0, 2000) + rng.choice(["ps", ""]) if rng.random() < 0.7 else ident()
            parts = [f"eps={eps}", f"dur={dur}"]
            if rng.random() < 0.5:
                parts.reverse()
            if not has_fine and rng.random() < 0.3:
                parts.insert(int(rng.integers(0, 3)), "fine")
                has_fine = True
            lines.append(f"seg {ident()} " + " ".join(parts))
            if rng.random() < 0.2:
                lines.append("# note")
        if rng.random() < 0.5:
            syncs.append(f"sync {name} offset={number(0, 1000)}ps")
    return "\n".join(lines + syncs) + rng.choice(["", "\n"])
