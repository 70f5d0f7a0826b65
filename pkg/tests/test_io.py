import json
import warnings

import numpy as np
import pytest

from conftest import CASES, MINI_DB
from founderlr.errors import InputError
from founderlr.io import (
    FrequencyDB, case_from_dict, case_markers, load_case, load_frequency_db, parse_scenario_arg,
    scenario_model, write_frequency_db,
)


def test_mini_db(mini_markers):
    db = load_frequency_db(MINI_DB)
    assert db.populations == ("Caucasian", "Afro-Caribbean", "Hispanic")
    assert db.sizes == {"Caucasian": 302, "Afro-Caribbean": 258, "Hispanic": 140}
    d3 = db.marker("D3")
    assert d3.alleles == ("11", "17", "other")
    np.testing.assert_allclose(d3.rho("Caucasian"), [0.002, 0.215, 0.783])
    np.testing.assert_allclose(d3.rho("Hispanic"), [0.0, 0.204, 0.796])
    th = db.marker("THO1")
    np.testing.assert_allclose([th.rho(p)[0] for p in db.populations], [0.190, 0.421, 0.279])
    for name, mk in mini_markers.items():
        for p in db.populations:
            np.testing.assert_allclose(db.marker(name).rho(p), mk.rho(p), rtol=1e-12)


def test_empty_and_malformed(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("")
    with pytest.raises(InputError):
        load_frequency_db(p)
    p.write_text("population,marker,allele,frequency\nP,M,1\n")
    with pytest.raises(InputError):
        load_frequency_db(p)
    p.write_text("population,marker,allele,frequency\nP,M,1,abc\n")
    with pytest.raises(InputError):
        load_frequency_db(p)
    p.write_text("pop,marker,allele,freq\n")
    with pytest.raises(InputError):
        load_frequency_db(p)
    with pytest.raises(InputError):
        load_frequency_db(tmp_path / "missing.csv")


def test_round_trip(tmp_path):
    db = load_frequency_db(MINI_DB)
    db.freqs["Caucasian"]["X"] = {"9.3": 0.1 / 3, "12": 2 / 3}
    out = tmp_path / "db.csv"
    write_frequency_db(db, out)
    back = load_frequency_db(out)
    assert back.freqs == db.freqs
    assert back.sizes == db.sizes


def test_sum_excess(tmp_path):
    p = tmp_path / "db.csv"
    p.write_text("population,marker,allele,frequency\nP,M,1,0.5\nP,M,2,0.5005\n")
    with pytest.warns(UserWarning, match="renormalised"):
        db = load_frequency_db(p)
    assert sum(db.freqs["P"]["M"].values()) == pytest.approx(1.0)
    p.write_text("population,marker,allele,frequency\nP,M,1,0.5\nP,M,2,0.51\n")
    with pytest.raises(InputError):
        load_frequency_db(p)
    p.write_text("population,marker,allele,frequency\nP,M,1,0.5\nP,M,2,0.5000001\n")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_frequency_db(p)


def test_missing_allele_strict_and_lenient():
    db = FrequencyDB({"P": {"M": {"1": 0.3, "2": 0.5}}})
    with pytest.raises(InputError):
        db.marker("M", evidence=["7"])
    with pytest.warns(UserWarning, match="floor"):
        mk = db.marker("M", evidence=["7"], strict=False)
    assert mk.alleles == ("1", "2", "7", "other")
    np.testing.assert_allclose(mk.rho("P"), [0.3, 0.5, 0.001, 0.199])
    full = FrequencyDB({"P": {"M": {"1": 0.4, "2": 0.6}}})
    with pytest.warns(UserWarning):
        mk = full.marker("M", evidence=["7"], strict=False, floor=0.01)
    np.testing.assert_allclose(mk.rho("P"), [0.4 * 0.99, 0.6 * 0.99, 0.01])


def test_modes_agree_without_missing_alleles():
    db = load_frequency_db(MINI_DB)
    case = load_case(CASES / "criminal_id.json").restrict(["D3", "THO1"])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = case_markers(case, db, strict=True)
        b = case_markers(case, db, strict=False)
    for m in a:
        assert a[m].alleles == b[m].alleles
        for p in db.populations:
            np.testing.assert_array_equal(a[m].rho(p), b[m].rho(p))


def test_criminal_case_file():
    case = load_case(CASES / "criminal_id.json")
    assert case.topology == "criminal-id" and len(case.markers) == 8
    for m in case.markers:
        assert case.genotypes["s"][m] == case.trace[m]
    assert "as" not in case.genotypes
    assert [s.get("label", s["kind"]) for s in case.scenarios] == ["baseline", "uaf", "ibd", "het", "UAF+IBD", "UAF+HET"]


def test_paternity_case_file():
    case = load_case(CASES / "paternity.json")
    assert case.topology == "paternity" and len(case.markers) == 8
    assert set(case.genotypes) == {"m", "c", "pf"}
    for m in case.markers:
        assert all(m in case.genotypes[a] for a in ("m", "c", "pf"))


def test_sibship_case_file():
    case = load_case(CASES / "sibship.json")
    assert set(case.genotypes) == {"m1", "c1", "m2", "c21", "c22"}
    assert "tf2" not in case.genotypes


def test_mixture_case_file():
    case = load_case(CASES / "mixture.json")
    assert case.mix["D7"] == ("8", "10", "11")
    assert case.mix["FGA"] == ("22", "24", "25", "26")
    assert case.hypotheses == ("s&v", "as&v")


def test_case_errors(tmp_path):
    base = {"topology": "criminal-id", "actors": {"s": {"M": "1 2"}}, "evidence": {"trace": {"M": "1 2"}}}
    assert case_from_dict(base).markers == ("M",)
    with pytest.raises(InputError):
        case_from_dict({**base, "actors": {"s": {"M": "1 2"}, "boss": None}})
    with pytest.raises(InputError):
        case_from_dict({**base, "topology": "incest"})
    with pytest.raises(InputError):
        case_from_dict({**base, "evidence": {}})
    with pytest.raises(InputError):
        case_from_dict({**base, "actors": {"s": {"M": "1 2 3"}}})
    with pytest.raises(InputError):
        case_from_dict({**base, "scenarios": [{"kind": "magic"}]})
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        load_case(p)
    p.write_text(json.dumps({**base, "actors": {"s": {"M": "1 9"}}, "evidence": {"trace": {"M": "1 9"}}}))
    db = FrequencyDB({"P": {"M": {"1": 0.5, "2": 0.5}}})
    with pytest.raises(InputError):
        load_case(p, db)
    load_case(p, db, strict=False)


def test_scenario_configs():
    assert scenario_model({"kind": "uaf"}, "P").urn.M == 100
    m = scenario_model({"kind": "ibd", "prior": {"unrelated": 0.9, "parent_child": 0.05, "half_sibs": 0.05}}, "P")
    assert m.ibd.parent_child == 0.05 and m.label == "IBD"
    with pytest.raises(InputError):
        scenario_model({"kind": "ibd", "prior": {"unrelated": 0.5, "sibs": 0.1}}, "P")
    with pytest.raises(InputError):
        scenario_model({"kind": "ibd", "prior": {"aliens": 0.1}}, "P")
    het = scenario_model({"kind": "het"}, "P", ("P", "Q", "R"))
    assert het.het.weights == pytest.approx((1 / 3,) * 3)
    c = scenario_model({"kind": "cascade", "first": {"kind": "uaf", "M": 50}, "second": {"kind": "het"}}, "P", ("P", "Q"))
    assert c.label == "UAF+HET" and c.urn.M == 50
    with pytest.raises(InputError):
        scenario_model({"kind": "cascade", "first": {"kind": "ibd"}, "second": {"kind": "het"}}, "P", ("P",))


def test_scenario_arguments():
    listed = [{"kind": "uaf", "M": 100}, {"kind": "cascade", "label": "UAF+IBD"}]
    assert parse_scenario_arg("uaf:250") == {"kind": "uaf", "M": "250"}
    assert parse_scenario_arg("UAF+IBD", listed) == listed[1]
    assert parse_scenario_arg("uaf", listed) == listed[0]
    assert parse_scenario_arg('{"kind": "coancestry", "theta": 0.01}') == {"kind": "coancestry", "theta": 0.01}
    with pytest.raises(InputError):
        parse_scenario_arg("ibd:3")
    with pytest.raises(InputError):
        parse_scenario_arg("mystery")
