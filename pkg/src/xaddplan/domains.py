"""Builtin benchmark domains.

Three classic hybrid planning domains: a 1D rover photographing two sites, a
2D rover rewarded for following a wedge-shaped corridor, and an n-resource
inventory with stochastic demand.  State boxes and the 1D action bound are
configuration defaults where the original problem statements leave them open.
"""

MARS_ROVER_1D = """\
domain mars1d {
  cvariables { x in [-100, 100]; }
  bvariables { tp1; tp2; }
  action move(ax in [-20, 20]) {
    tp1' = if tp1 | (x > 40 & x < 60) then 1.0 else 0.0;
    tp2' = if tp2 | (x > -60 & x < -40) then 1.0 else 0.0;
    x' = x + ax;
  }
  reward = (if tp1' & !tp1 & x > 50 then 40 - 0.2*(x - 50)
            else if tp1' & !tp1 & x < 50 then 40 - 0.2*(50 - x)
            else if tp1' & tp1 then 1.1
            else -2)
         + (if tp2' & !tp2 & x > -50 then 60 - 0.2*(-x + 50)
            else if tp2' & !tp2 & x < -50 then 60 - 0.2*(x + 50)
            else if tp2' & tp2 then 1.2
            else -1)
         - 0.1*abs(ax);
  discount 1.0;
  horizon 6;
}
"""

MARS_ROVER_2D = """\
domain mars2d {
  cvariables { x in [-100, 100]; y in [-100, 100]; }
  action move(ax in [-10, 10], ay in [-10, 10]) {
    x' = x + ax;
    y' = y + ay;
  }
  reward = if (x > y + 25) & (x > -y + 25) & (y > 0) then -10 + x - y
           else if (x > y + 25) & (x > -y + 25) & (y < 0) then -10 + x + y
           else -1;
  discount 1.0;
  horizon 6;
}
"""


def _inventory_text(n):
    lines = [f"domain inventory{n} {{", "  cvariables {"]
    for i in range(1, n + 1):
        lines.append(f"    x{i} in [0, 1000];")
    lines.append("  }")
    lines.append("  bvariables { d; }")
    for i in range(1, n + 1):
        lines.append(f"  action order{i}() {{")
        lines.append("    d' = bernoulli(0.6);")
        for j in range(1, n + 1):
            v = f"x{j}"
            if j == i:
                lines.append(
                    f"    {v}' = if d' then (if {v} > 150 then {v} + 200 - 150 else 200)"
                    f" else (if {v} > 50 then {v} + 200 - 50 else 200);")
            else:
                lines.append(
                    f"    {v}' = if d' then (if {v} > 150 then {v} - 150 else 0)"
                    f" else (if {v} > 50 then {v} - 50 else 0);")
        lines.append("  }")
    # reward: amount sold this step, i.e. what each transition subtracts
    sold = []
    for j in range(1, n + 1):
        v = f"x{j}"
        sold.append(f"(if d' then (if {v} > 150 then 150 else {v})"
                    f" else (if {v} > 50 then 50 else {v}))")
    lines.append("  reward = " + "\n         + ".join(sold) + ";")
    lines.append("  discount 1.0;")
    lines.append("  horizon 6;")
    lines.append("}")
    return "\n".join(lines) + "\n"


def builtin(name: str, n: int = 1) -> str:
    """Domain text for a builtin; ``n`` is the inventory resource count."""
    if name == "mars1d":
        return MARS_ROVER_1D
    if name == "mars2d":
        return MARS_ROVER_2D
    if name == "inventory":
        if n < 1:
            raise ValueError("inventory needs n >= 1")
        return _inventory_text(n)
    raise KeyError(f"unknown builtin domain {name!r}")


BUILTIN_NAMES = ("mars1d", "mars2d", "inventory")
