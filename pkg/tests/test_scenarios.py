import json
from decimal import Decimal

import pytest

from provesizer import cost_model as cm
from provesizer import scenarios as sc
from provesizer.errors import InsufficientRows, InvalidParameter, UnknownMachine, UnknownScenario
from provesizer.scenarios import TableRow, back_derive_unit_costs, baseline_policy, compare

GAS_BASIS_USD = 10 * 1e-9 * 2500  # 10 gwei at $2500/ETH


def raw(name):
    return json.loads((sc.DATA / name).read_text(), parse_float=Decimal)


# --- catalogs ----------------------------------------------------------------

def test_machine_constants_as_written():
    rows = {m["name"]: m for m in raw("machines.json")}
    gpu, cpu = rows["gpu-8xl4"], rows["cpu-m7i.24xlarge"]
    assert [str(gpu[k]) for k in ("monthly_cost_usd", "t_super_s", "t_batch_s", "t_bundle_s")] == \
        ["1000", "1592.81", "1718.2", "518"]
    assert [str(cpu[k]) for k in ("monthly_cost_usd", "t_super_s", "t_batch_s", "t_bundle_s")] == \
        ["2839", "2352", "1952", "804"]


def test_scenario_constants_as_written():
    data = raw("scenarios.json")
    assert {k: str(v["tps"]) for k, v in data.items()} == \
        {"steady": "0.10", "tge": "2.12", "blob_spike": "0.10", "surge": "100"}
    assert str(data["blob_spike"]["quoted_blob_fee_usd"]) == "3450"
    assert str(data["surge"]["expected_baseline"]["da"]) == "820507"
    assert str(data["steady"]["expected_baseline"]["total"]) == "73989.1"


def test_catalog_loads(gpu, cpu, catalog):
    assert (gpu.monthly_cost_usd, gpu.t_super_s, gpu.t_batch_s, gpu.t_bundle_s) == (1000, 1592.81, 1718.2, 518)
    assert (cpu.monthly_cost_usd, cpu.t_super_s, cpu.t_batch_s, cpu.t_bundle_s) == (2839, 2352, 1952, 804)
    assert gpu.fits_all_steps and cpu.fits_all_steps
    assert sorted(catalog) == ["blob_spike", "steady", "surge", "tge"]


def test_empty_user_file(tmp_path):
    f = tmp_path / "machines.json"
    f.write_text("")
    assert [m.name for m in sc.machine_catalog(f)] == ["gpu-8xl4", "cpu-m7i.24xlarge"]


def test_user_machines_merge_by_name(tmp_path):
    f = tmp_path / "machines.json"
    f.write_text(json.dumps([
        {"name": "gpu-8xl4", "monthly_cost_usd": 900},
        {"name": "tiny", "monthly_cost_usd": 50, "t_super_s": 900, "t_batch_s": 900, "t_bundle_s": 90,
         "memory_gb": 64},
    ]))
    cat = {m.name: m for m in sc.machine_catalog(f)}
    assert cat["gpu-8xl4"].monthly_cost_usd == 900 and cat["gpu-8xl4"].t_super_s == 1592.81
    assert not cat["tiny"].fits_all_steps
    params = sc.get_scenario("steady").params(cat["tiny"])
    assert cm.check_feasibility(params, cat["tiny"].memory_gb) is cm.Feasibility.MEMORY_INFEASIBLE


def test_user_scenarios_merge(tmp_path):
    f = tmp_path / "scenarios.json"
    f.write_text(json.dumps({"steady": {"tps": 0.2}}))
    cat = sc.scenario_catalog(f)
    assert cat["steady"].tps == 0.2 and cat["steady"].gas_verification_per_bundle == 1077478


def test_unknown_names(catalog):
    with pytest.raises(UnknownScenario):
        sc.get_scenario("nope", catalog)
    with pytest.raises(UnknownMachine):
        sc.get_machine("nope")


def test_bad_machine_rejected():
    with pytest.raises(InvalidParameter):
        sc.MachineSpec("x", 0, 1, 1, 1, 1)
    with pytest.raises(InvalidParameter):
        sc.MachineSpec.from_dict({"name": "x", "bogus": 1})


def test_scenario_keeps_quoted_fee(catalog):
    s = catalog["blob_spike"]
    assert s.quoted_blob_fee_usd == 3450
    assert isinstance(s.da_model, cm.FlatUsdPerBatch)


# --- baseline ----------------------------------------------------------------

@pytest.mark.parametrize("name,fleet", [("steady", "2/1/1"), ("tge", "27/1/1"), ("blob_spike", "2/1/1"),
                                        ("surge", "1245/30/2")])
def test_baseline_fleets(catalog, gpu, name, fleet):
    cfg = baseline_policy(catalog[name], gpu)
    assert cfg.fleet == fleet
    assert cfg.batch_epoch_s == cfg.bundle_epoch_s == 1718.2
    assert cm.is_feasible(catalog[name].params(gpu), cfg)


def test_literal_baseline_reading(catalog, gpu):
    assert baseline_policy(catalog["surge"], gpu, literal=True).fleet == "1245/28/1"


def test_zero_tps_baseline(catalog, gpu):
    cfg = sc.baseline_config(catalog["steady"].params(gpu, tps=0))
    assert cfg.fleet == "0/0/1"


@pytest.mark.parametrize("name", ["steady", "tge", "blob_spike", "surge"])
def test_baseline_reproduces_table_cells(catalog, gpu, name):
    s = catalog[name]
    cost = cm.monthly_cost(s.params(gpu), baseline_policy(s, gpu))
    row = s.expected_baseline
    assert cost.da_usd_month == pytest.approx(float(row["da"]), rel=0.05)
    assert cost.verification_usd_month == pytest.approx(float(row["verification"]), rel=0.05)
    assert cost.machine_usd_month == float(row["machine"])


# --- calibration -------------------------------------------------------------

def test_steady_da_pair():
    fit = back_derive_unit_costs([TableRow("da", 27350.2, 1718.2), TableRow("da", 7400, 6337)])
    assert fit.da_usd_per_batch == pytest.approx(18.13, rel=0.01)
    assert fit.verification_usd_per_bundle is None
    assert all(abs(r) <= 0.01 for _, r in fit.residuals)


def test_blob_spike_pair():
    fit = back_derive_unit_costs([TableRow("da", 7548660, 1718.2), TableRow("da", 2200000, 5799)])
    assert fit.da_usd_per_batch == pytest.approx(4960, rel=0.02)


def test_verification_rows():
    rows = [TableRow("verification", 11000, 6337), TableRow("verification", 11000, 6337),
            TableRow("verification", 10000, 7005)]
    da, ver = back_derive_unit_costs(rows)
    assert da is None
    assert ver == pytest.approx(26.9, rel=0.01)


def test_joint_fit_and_postings():
    rows = [TableRow("da", 100 * 2592000 / 1000 * 3, 1000, postings=3), TableRow("verification", 2592, 1000)]
    fit = back_derive_unit_costs(rows)
    assert fit.da_usd_per_batch == pytest.approx(100)
    assert fit.verification_usd_per_bundle == pytest.approx(1)


def test_insufficient_rows():
    with pytest.raises(InsufficientRows):
        back_derive_unit_costs([])
    with pytest.raises(InvalidParameter):
        TableRow("gas", 1, 1)


def test_shipped_unit_costs_match_fit(catalog, gpu):
    rows = sc.reference_calibration_rows(catalog, gpu)
    da = back_derive_unit_costs(rows["da"]).da_usd_per_batch
    blob = back_derive_unit_costs(rows["da_blob_spike"]).da_usd_per_batch
    ver = back_derive_unit_costs(rows["verification"]).verification_usd_per_bundle
    for name in ("steady", "tge", "surge"):
        s = catalog[name]
        assert s.da_model.gas_da_per_batch == round(da / GAS_BASIS_USD)
        assert s.gas_verification_per_bundle == round(ver / GAS_BASIS_USD)
    assert catalog["blob_spike"].da_model.usd == round(blob, 2)


# --- compare -----------------------------------------------------------------

@pytest.mark.parametrize("before,after,pct", [(73989.1, 22400, 69.7), (7591298.9, 2214000, 70.8), (5, 5, 0.0)])
def test_compare(before, after, pct):
    assert compare(before, after).reduction_pct == pct


def test_compare_breakdowns(scenario_params):
    p = scenario_params["steady"]
    a = cm.monthly_cost(p, cm.DerivedConfig(2, 1, 1, 1718.2, 1718.2))
    b = cm.monthly_cost(p, cm.DerivedConfig(2, 1, 1, 6337, 6337))
    rep = compare(a, b)
    assert rep.saved_usd == pytest.approx(a.total_usd_month - b.total_usd_month)
    assert set(rep.to_dict()) == {"total_before", "total_after", "saved_usd", "reduction_pct"}


def test_compare_rejects_nonpositive():
    with pytest.raises(InvalidParameter):
        compare(0, 1)
