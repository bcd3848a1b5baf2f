import numpy as np
import pytest
from fastapi.testclient import TestClient

from app import app

client = TestClient(app)


def test_root_and_health():
    assert client.get("/").json()["status"] == "online"
    assert client.get("/health").json()["status"] == "healthy"


def test_kolmogorov_lookup():
    body = client.get("/kolmogorov", params={"x": 1.3581}).json()
    assert body["cdf"] == pytest.approx(0.95, abs=1e-4)
    assert body["cdf"] + body["sf"] == pytest.approx(1.0)


def test_kolmogorov_quantile_endpoint():
    assert client.get("/kolmogorov/quantile", params={"p": 0.95}).json()["quantile"] == pytest.approx(1.3581, abs=1e-4)
    assert client.get("/kolmogorov/quantile", params={"p": 1.5}).status_code == 422


def test_change_point_endpoint():
    rng = np.random.default_rng(4)
    values = np.concatenate(([0.0], np.cumsum(np.r_[rng.standard_normal(100), 4.0 * rng.standard_normal(100)])))
    response = client.post("/test", json={"values": values.tolist(), "level": 0.05})
    assert response.status_code == 200
    body = response.json()
    assert body["reject"] is True
    assert 90 <= body["k_star"] <= 110


def test_change_point_endpoint_rejects_bad_input():
    assert client.post("/test", json={"values": [1.0, 1.0, 1.0, 1.0]}).status_code == 422
    assert client.post("/test", json={"values": [0.0, 1.0]}).status_code == 422
