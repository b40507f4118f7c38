"""Affine mappability test for loop-nest array accesses.

An access A[f_0(t, s)][f_1(t, s)]... with f_k = c_k + sum_i beta_ki t_i +
sum_j alpha_kj s_j maps onto the array's neighbour links only when at most
one spatial coefficient is nonzero and that one is -1 or +1: data then
moves one hop per step along one axis, or is purely local.
"""

import re
from dataclasses import dataclass, field

SPATIAL = ("x", "y")


@dataclass(frozen=True)
class AccessFunction:
    name: str = "A"
    const: tuple = ()        # c_k per array dimension
    temporal: tuple = ()     # beta[k] = {loop var: coeff}
    spatial: tuple = ()      # alpha[k] = (alpha_kx, alpha_ky)

    @classmethod
    def parse(cls, text: str, spatial=SPATIAL):
        """'A[i + x][2y - 1]' style; every index must be affine."""
        m = re.fullmatch(r"\s*(\w+)\s*((?:\[[^\]]*\]\s*)+)", text)
        if not m:
            raise ValueError(f"cannot parse access {text!r}")
        dims = re.findall(r"\[([^\]]*)\]", m.group(2))
        consts, temps, spats = [], [], []
        for d in dims:
            c, coeffs = _linear(d)
            consts.append(c)
            temps.append(tuple(sorted((v, a) for v, a in coeffs.items() if v not in spatial)))
            spats.append(tuple(coeffs.get(v, 0) for v in spatial))
        return cls(m.group(1), tuple(consts), tuple(temps), tuple(spats))


def _linear(expr):
    s = expr.replace(" ", "")
    if not s:
        raise ValueError("empty index expression")
    if s[0] not in "+-":
        s = "+" + s
    terms = re.findall(r"[+-][^+-]+", s)
    if "".join(terms) != s:
        raise ValueError(f"cannot parse index {expr!r}")
    c, coeffs = 0, {}
    for t in terms:
        sign = -1 if t[0] == "-" else 1
        body = t[1:]
        mm = re.fullmatch(r"(\d*)\*?([A-Za-z_]\w*)", body)
        if mm:
            k = int(mm.group(1) or 1)
            coeffs[mm.group(2)] = coeffs.get(mm.group(2), 0) + sign * k
        elif body.isdigit():
            c += sign * int(body)
        else:
            raise ValueError(f"non-affine term {t!r} in {expr!r}")
    return c, coeffs


@dataclass(frozen=True)
class Verdict:
    ok: bool
    witness: tuple = field(default=())   # ((dim, axis, coeff), ...) that break the rule
    reason: str = ""

    def __bool__(self):
        return self.ok


def check_affine_mappability(f: AccessFunction, axes=SPATIAL) -> Verdict:
    nz = [(k, axes[j], a) for k, row in enumerate(f.spatial) for j, a in enumerate(row) if a]
    if len(nz) > 1:
        return Verdict(False, tuple(nz), f"{len(nz)} nonzero spatial coefficients")
    if nz and abs(nz[0][2]) > 1:
        return Verdict(False, tuple(nz), f"spatial coefficient {nz[0][2]} outside {{-1, 0, 1}}")
    return Verdict(True, (), "")
