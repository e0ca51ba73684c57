"""
Switching on the 118-bus network
================================

Every branch is rated 210 MW, which congests the network.  Flexible devices cut
the dispatch cost; letting every branch switch closes the gap to the
transportation bound.  The switching model has 186 binaries; the embedded solver
may need several minutes, so HiGHS is used for it when ``highspy`` is installed.
"""

# %%
from flexopf import apply_overlay, assemble, load_case, load_overlay, solve
from flexopf.milp.external import available, solve_external

case118 = load_case("case118.m")


def run(overlay, formulation="ed", external=False):
    case, horizon = apply_overlay(case118, load_overlay(f"{overlay}.toml"))
    asm = assemble(case, horizon, formulation)
    res = solve_external(asm.model) if external else solve(asm)
    return asm, res


# %%
_, rigid = run("ieee118_base")
_, flexible = run("ieee118_flex")
_, transport = run("ieee118_base", "transportation")
print(f"rigid          {rigid.objective:10.2f} $/h")
print(f"flexible       {flexible.objective:10.2f} $/h")
print(f"transportation {transport.objective:10.2f} $/h")

# %%
asm, ts = run("ieee118_ts", external=available())
opened = [asm.problem.case.branches[k].label for (t, k), v in asm.block.tra.items()
          if not isinstance(v, float) and round(ts.value(v)) == 1]
print(f"switching      {ts.objective:10.2f} $/h with {len(opened)} branches open: {', '.join(opened)}")
