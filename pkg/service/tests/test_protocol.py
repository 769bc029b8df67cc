import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

import patterns
from relscore.serve import ModelRuntime, create_app


@pytest.fixture(scope="session")
def client(trained):
    result, _, _ = trained
    runtime = ModelRuntime(result.model, result.tokenizer, name="tiny-test")
    return TestClient(create_app(runtime), raise_server_exceptions=False)


@pytest.fixture()
def empty_client():
    return TestClient(create_app(None), raise_server_exceptions=False)


def statement_payload(raw):
    return {"tokens": raw["tokens"], "pos_a": raw["pos_a"], "pos_b": raw["pos_b"]}


def test_health_handshake(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["model"] == "tiny-test"
    assert body["dim"] == 64


def test_score_distributions_on_simplex(client):
    raw = patterns.generate(64, seed=9)
    resp = client.post("/score", json={"statements": [statement_payload(r) for r in raw]})
    assert resp.status_code == 200
    dists = resp.json()["distributions"]
    assert len(dists) == 64
    for dist in dists:
        assert len(dist) == 3
        assert all(p >= 0 for p in dist)
        assert abs(sum(dist) - 1.0) <= 1e-6


def test_score_order_preserved_on_shuffled_batch(client):
    raw = patterns.generate(256, seed=10)
    singles = []
    for r in raw:
        resp = client.post("/score", json={"statements": [statement_payload(r)]})
        singles.append(resp.json()["distributions"][0])
    rng = np.random.default_rng(0)
    order = rng.permutation(256)
    shuffled = [raw[i] for i in order]
    resp = client.post(
        "/score", json={"statements": [statement_payload(r) for r in shuffled]}
    )
    batch = resp.json()["distributions"]
    for row, original_index in enumerate(order):
        assert np.allclose(batch[row], singles[original_index], atol=1e-5), row
    print("[acceptance] protocol-conformance: PASS (256-statement order preserved)")


def test_empty_batch(client):
    resp = client.post("/score", json={"statements": []})
    assert resp.status_code == 200
    assert resp.json()["distributions"] == []


def test_surface_swap_invariance(client):
    # both terms are masked, so swapping their surface forms with fixed
    # context cannot change the distribution
    tokens = ["the", "genus0", "such_as", "species5", "today"]
    swapped = ["the", "species5", "such_as", "genus0", "today"]
    one = client.post(
        "/score", json={"statements": [{"tokens": tokens, "pos_a": 1, "pos_b": 3}]}
    ).json()["distributions"][0]
    two = client.post(
        "/score", json={"statements": [{"tokens": swapped, "pos_a": 1, "pos_b": 3}]}
    ).json()["distributions"][0]
    assert np.allclose(one, two, atol=1e-7)


def test_health_dim_matches_embed_length(client):
    dim = client.get("/health").json()["dim"]
    resp = client.post(
        "/embed",
        json={
            "term": "species1",
            "mentions": [{"tokens": ["the", "species1", "today"], "pos": 1}],
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["dim"] == dim
    assert len(body["vector"]) == dim


def test_embed_single_and_duplicate_mentions(client):
    mention = {"tokens": ["people", "enjoy", "species2", "here"], "pos": 2}
    single = client.post(
        "/embed", json={"term": "species2", "mentions": [mention]}
    ).json()["vector"]
    doubled = client.post(
        "/embed", json={"term": "species2", "mentions": [mention, mention]}
    ).json()["vector"]
    assert np.allclose(single, doubled, atol=1e-6)


def test_embed_mean_of_distinct_mentions(client):
    m1 = {"tokens": ["people", "enjoy", "species3", "here"], "pos": 2}
    m2 = {"tokens": ["species3", "is_a", "genus3", "today"], "pos": 0}
    v1 = np.array(client.post("/embed", json={"term": "species3", "mentions": [m1]}).json()["vector"])
    v2 = np.array(client.post("/embed", json={"term": "species3", "mentions": [m2]}).json()["vector"])
    both = np.array(
        client.post("/embed", json={"term": "species3", "mentions": [m1, m2]}).json()["vector"]
    )
    assert np.allclose(both, (v1 + v2) / 2, atol=1e-6)


def test_embed_requires_mentions(client):
    resp = client.post("/embed", json={"term": "species4", "mentions": []})
    assert resp.status_code == 400
    assert resp.json()["code"] == 400


def test_model_not_loaded_is_409(empty_client):
    for call in (
        lambda c: c.get("/health"),
        lambda c: c.post("/score", json={"statements": []}),
        lambda c: c.post(
            "/embed", json={"term": "x", "mentions": [{"tokens": ["x"], "pos": 0}]}
        ),
    ):
        resp = call(empty_client)
        assert resp.status_code == 409
        body = resp.json()
        assert body["code"] == 409
        assert "model" in body["error"]


def test_malformed_statement_is_400(client):
    resp = client.post(
        "/score", json={"statements": [{"tokens": ["a", "b"], "pos_a": 0, "pos_b": 9}]}
    )
    assert resp.status_code == 400
    assert resp.json()["code"] == 400
