"""Random C identifiers for generated programs."""

import random
import string

C_KEYWORDS = frozenset("""
auto break case char const continue default do double else enum extern float for goto if
inline int long register restrict return short signed sizeof static struct switch typedef
union unsigned void volatile while _Bool _Complex _Imaginary _Alignas _Alignof _Atomic
_Generic _Noreturn _Static_assert _Thread_local
""".split())

# names the program wrapper or the math library already use
RESERVED = frozenset({
    "main", "printf", "stdio", "math", "NULL", "abs", "fabs", "sqrt", "sin", "cos", "tan",
    "tanh", "exp", "log", "floor", "ceil", "fmax", "fmin", "pow", "y0", "y1", "j0", "j1",
    "jn", "yn", "erf", "gamma", "round", "trunc", "rint", "cbrt", "hypot", "asin", "acos",
    "atan", "sinh", "cosh", "log2", "exp2", "frexp", "ldexp", "modf", "fmod", "nan",
})

_FIRST = string.ascii_letters + "_"
_REST = string.ascii_letters + string.digits + "_"


def gen_identifier(rng: random.Random, taken=None) -> str:
    """Draw a 1-5 character identifier that is not a keyword and not in ``taken``.

    The new name is added to ``taken`` when a set is passed.
    """
    while True:
        n = rng.randint(1, 5)
        name = rng.choice(_FIRST) + "".join(rng.choice(_REST) for _ in range(n - 1))
        # leading double underscore and _Upper are reserved in C
        if name.startswith("__") or (len(name) > 1 and name[0] == "_" and name[1].isupper()):
            continue
        if name in C_KEYWORDS or name in RESERVED:
            continue
        if taken is not None:
            if name in taken:
                continue
            taken.add(name)
        return name
