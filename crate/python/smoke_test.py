"""Smoke test for the gaia_bim extension module.

Build and install first:  pip install ./crates/py   (or: maturin develop -m crates/py/Cargo.toml)
"""

import gaia_bim

model = gaia_bim.Model.villa()
assert len(model) == 48, len(model)

xml = model.export_xml()
doc = gaia_bim.parse_xml(xml)
assert len(doc["walls"]) == 48

rewritten = gaia_bim.parse_xml(gaia_bim.rule_rewrite(xml))
golden = model.golden_labels()
assert {w["id"]: w["type_name"] for w in rewritten["walls"]} == golden

assert gaia_bim.classify("  kitchen TERRACE ") == "outdoor"
assert gaia_bim.golden_type("wet", "outdoor") == "EIFS on Mtl. Stud with tile finish 300mm"
assert gaia_bim.golden_type("outdoor", "outdoor") is None
assert gaia_bim.majority_vote(["a", "b", "b", "a"]) == "a"
assert gaia_bim.interpret_kappa(0.86) == "strong"

kappa = gaia_bim.fleiss_kappa([[2, 0], [0, 2], [1, 1]])
assert abs(kappa["overall"] - 1 / 3) < 1e-12, kappa

proposal = model.propose("Detail every wall by the spaces on each side")
changes = proposal["changeset"]["changes"]
assert len(changes) == 48
detailed = model.apply(proposal["changeset"])
assert detailed.wall_types() == golden
assert model.wall_types() != golden

try:
    detailed.apply(proposal["changeset"])
except gaia_bim.GaiaError as e:
    assert "conflict" in str(e)
else:
    raise AssertionError("stale change set applied")

result = model.evaluate("Detail every wall", iterations=3)
assert result["metrics"]["accuracy"] == 1.0
assert result["kappa"]["overall"] == 1.0
again = gaia_bim.evaluate_csv(result["csv"])
assert again["metrics"] == result["metrics"]
assert gaia_bim.labels()[0] == "Generic - 150mm"

print("gaia_bim smoke test passed")
