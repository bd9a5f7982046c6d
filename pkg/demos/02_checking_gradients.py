"""Compare analytic loss gradients with central finite differences.

The first pair in each check has a single foreground element in 512,
the most lopsided case the gradients need to handle.
"""

from segloss.experiment.gradcheck import check_closed_form, check_loss

for name in ("wce", "dl2", "ss", "gdl_uniform", "gdl_v"):
    res = check_loss(name, seeds=20)
    print(f"{res.loss:12s} cases={res.cases} max relative error={res.max_rel_error:.2e}"
          f" {'ok' if res.passed else 'FAILED'}")

exact, fd = check_closed_form(seeds=20)
print(f"two-class closed form vs general gradient {exact:.2e}, vs finite differences {fd:.2e}")
