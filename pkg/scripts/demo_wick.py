"""Mean of a commutator with two spectator fields: inner and outer pairings."""

from holofield import wick
from holofield.fields import example_h_hat
from holofield.lattice import Grid

g = Grid((16, 16))
hd = wick.lattice_time_derivatives(example_h_hat(g))
pts = [(0, 0), (2, 3), (1, -4), (5, 2)]
for C in (2.0, 5.0, 10.0):
    res = wick.mean_of_word(wick.commutator_word(*pts, C), wick.position_covariance(hd))
    outer = res.channel_sum("outer")
    print(f"C = {C:5.1f}  inner = {res.channel_sum('inner'):.4e}  outer = {outer:.4e}  "
          f"closed form = {wick.outer_closed_form(hd, *pts, C):.4e}  |outer|/C^2 = {abs(outer) / C**2:.4e}")
print(f"{len(res.diagrams)} diagrams; first rows of the diagram table:")
print("\n".join(res.to_csv().splitlines()[:4]))
