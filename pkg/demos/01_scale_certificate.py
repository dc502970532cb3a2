"""
Certifying the scale recursion
==============================

Walk the growth factors Y_k, singular budgets S_k and decay exponents b_k
of the reference base, then look at where the certificate stops closing.
"""

from afslab import engine as en

base = en.derive_base(d=1, beta=1, b0=5, p0="23^-4", L0="11^256")
print("switch scale K =", base.K)

# short run: every check closes
cert = en.certify(base, 39)
print("k_max=39:", "pass" if cert.overall else "fail", len(cert.checks), "checks")

# full run to k=60
cert = en.certify(base, 60)
for rec, esl in zip(cert.records[28:34], cert.esl[28:34]):
    delta, kappa, _ = esl.as_floats()
    print(f"k={rec.k:2d}  Y={rec.Y}  S={rec.S}  delta={delta:.4f}  kappa={kappa:.4f}")

bad = cert.failures
print(len(bad), "failing checks, first:", bad[0].name if bad else None, "at k =", bad[0].k if bad else None)

# ESL exponents climb towards 1
print("delta_60 =", round(cert.esl[60].as_floats()[0], 6))
