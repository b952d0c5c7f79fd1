from pulsecool import core, verify


def test_verification_suite_passes():
    checks = verify.run_verification(core.make_params(n_fock=32))
    assert verify.all_passed(checks)
    names = {c.name for c in checks}
    assert {"red_sideband_identity", "demi_pulse_merged_vs_product",
            "trotter_first_order_ratio", "chain_two_and_three_ion_closed_forms",
            "propagator_unitarity"} <= names


def test_format_report_lines():
    checks = verify.run_verification(core.make_params(n_fock=24))
    report = verify.format_report(checks)
    assert report.count("\n") == len(checks) - 1
    assert "PASS" in report
