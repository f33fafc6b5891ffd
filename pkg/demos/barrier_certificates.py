"""Numerical certificates for the barrier catalog.

Each barrier is checked by sampling the defining differential inequality
under the worst admissible operator; a negative margin comes with the point
where it occurs.  The script also shows the two failure modes the checker
must catch: a deliberately shrunken upper barrier and an enlarged lower one.

    python3 demos/barrier_certificates.py
"""
from blowuplab import barriers as B
from blowuplab.errors import OutOfRangeError, SearchError
from blowuplab.nonlinearity import NonlinearitySpec


def show(label, spec, nl, **kw):
    rep = B.verify_barrier(spec, nl, **kw)
    where = "" if rep.argmin_point is None else f" at {tuple(round(float(x), 4) for x in rep.argmin_point)}"
    print(f"  {label:<44} {rep.status:<6} min margin {rep.min_margin:+.4e}{where}")


def main():
    pow2, pow3 = NonlinearitySpec.power(2), NonlinearitySpec.power(3)
    exp = NonlinearitySpec.exponential()
    print("upper barriers (supersolutions blowing up on the sphere)")
    show("Keller-Osserman, u^3, n=2", B.keller_osserman_power(2, 3.0, 1.0, 1.0, 0.0), pow3)
    show("Keller-Osserman, u^3, Lam=2", B.keller_osserman_power(2, 3.0, 1.0, 2.0, 0.0), pow3)
    show("Keller-Osserman, e^u, n=3, K=1", B.keller_osserman_exp(3, 1.0, 1.0, 1.0), exp)
    show("Keller-Osserman, u^3, N0 halved", B.keller_osserman_power(2, 3.0, 1.0, 1.0, 0.0, scale=0.5), pow3)

    print("\nlower barriers (subsolutions)")
    show("singular, u^2, n=2", B.singular_lower(2, 2.0, 1.0, 1.0, 0.0), pow2)
    show("singular, u^3, c0 doubled", B.singular_lower(2, 3.0, 1.0, 1.0, 0.0, scale=2.0), pow3)
    show("planar power profile, u^2, K=1", B.power_lower_subsolution(2, 2.0, 1.0, 1.0, 1.0), pow2)
    show("planar exponential profile, e^u", B.exp_lower_subsolution(2, 1.0, 1.0, 1.5)[2], exp)
    res = B.exterior_ball_lower(2, 2.0, 1.0, 1.0, 0.0, 0.25)
    print(f"  exterior ball profile: smallest exponent m = {res.m}, N = {res.N:.3e}")
    show("exterior ball, u^2", res.barrier, pow2)
    _, frozen = B.frozen_coeff_lower(2, 2.0, 0.0, lambda r: 0.0)
    show("frozen coefficients, u^2", frozen, pow2, mode="frozen")

    print("\nparameters outside the admissible ranges are refused with a reason")
    for label, call in (("singular barrier, n=3, p=4", lambda: B.singular_lower(3, 4.0, 1.0, 1.0, 0.0)),
                        ("exterior ball, delta=1e-7, Lam=4",
                         lambda: B.exterior_ball_lower(2, 2.0, 1.0, 4.0, 0.0, 1e-7, n_samples=10**4))):
        try:
            call()
        except (OutOfRangeError, SearchError) as exc:
            print(f"  {label}: {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    main()
