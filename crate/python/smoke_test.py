"""Smoke test for the muqar extension module.

Build and install it first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

then run `python python/smoke_test.py` or `pytest python/smoke_test.py`.
"""

import math

import muqar


def small_world():
    world = muqar.World(seed=11, garments=150)
    store = world.sample(seed=5)
    return world, store, store.dataset(n=8, k=1, a_max=4)


def test_taxonomy_round_trip():
    world, _, _ = small_world()
    tax = world.taxonomy
    again = muqar.Taxonomy.from_json(tax.to_json())
    assert again.hash == tax.hash
    category = tax.categories[0]
    legal = tax.legal_attributes(category)
    assert tax.check(category, legal[:2]) == []
    illegal = [a for a in tax.attributes if a not in legal][:1]
    assert tax.check(category, illegal)


def test_series_and_dataset():
    world, store, data = small_world()
    s = store.series(world.taxonomy.attributes[0])
    assert len(s["weeks"]) == store.weeks_loaded == len(s["values"])
    assert all(0.0 <= v <= 1.0 for v in s["values"])
    train, val, test = data.sizes
    assert train > 0 and val > 0 and test > 0
    assert data.shape == (8, 1, 4, world.feature_dim)


def test_train_predict_persist():
    world, store, data = small_world()
    model = muqar.train(data, architecture="muqar", qar="lstm", epochs=8, seed=1, hidden=16)
    report = model.evaluate(data, "test")
    assert report["samples"] == data.sizes[2]
    assert report["mae"] < data.mean_baseline_mae("test")

    tax = world.taxonomy
    category = tax.categories[0]
    attrs = tax.legal_attributes(category)[:2]
    out = model.forecast(store, category, attrs, world.period[1])
    assert len(out) == 1 and all(0.0 <= v <= 1.0 for v in out)

    clone = muqar.Model.from_bytes(model.to_bytes(), tax.hash)
    assert clone.forecast(store, category, attrs, world.period[1]) == out
    assert clone.predict_split(data) == model.predict_split(data)
    try:
        muqar.Model.from_bytes(model.to_bytes(), "0" * 64)
    except muqar.MuqarError:
        pass
    else:
        raise AssertionError("foreign taxonomy accepted")


def test_metrics_and_topsis():
    assert math.isclose(muqar.mae([0.1, 0.3], [0.2, 0.2]), 0.1)
    assert math.isclose(muqar.pcc([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]), 1.0)
    assert muqar.auc([0.9, 0.1], [True, False]) == 1.0
    ranking = muqar.topsis(
        ["a", "b", "c"],
        [("mae", "cost"), ("acc", "benefit")],
        [[0.1, 0.9], [0.2, 0.5], [0.3, 0.1]],
    )
    assert [name for _, name, _ in ranking] == ["a", "b", "c"]
    assert ranking[0][2] == 1.0


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
