import asyncio

import pytest
from fastapi.testclient import TestClient

import main
from classifiers import ModelKind, save_model, train_classifier
from conftest import separable_docs
from textprep import prepare

KEY = "test-key-123"
AUTH = {"Authorization": f"Bearer {KEY}"}


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    docs = prepare(separable_docs(300, seed=5))
    classifier = train_classifier(ModelKind.LOGREG, docs, hyperparameters={"learning_rate": 1.0})
    return str(save_model(classifier, tmp_path_factory.mktemp("models") / "model.json"))


@pytest.fixture
def client(monkeypatch, model_file):
    monkeypatch.setattr(main, "API_KEY", KEY)
    monkeypatch.setattr(main, "MODEL_PATH", model_file)
    main._cache.clear()
    yield TestClient(main.app)
    main._cache.clear()


def test_health_needs_no_key(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["model_loaded"] is False


def test_predict_labels_and_probabilities(client):
    response = client.post("/predict", json={"texts": ["i am so happy", "so sad today"]}, headers=AUTH)
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == "logreg"
    first = body["results"][0]
    assert first["label"] == "positive"
    assert set(first["probabilities"]) == {"positive", "negative", "neutral"}
    assert sum(first["probabilities"].values()) == pytest.approx(1.0)
    assert client.get("/health").json()["model_loaded"] is True


def test_model_description(client):
    response = client.get("/model", headers=AUTH)
    assert response.status_code == 200
    assert response.json()["probabilities"] is True


def test_wrong_key(client):
    response = client.post("/predict", json={"texts": ["hi"]}, headers={"Authorization": "Bearer nope"})
    assert response.status_code == 401


def test_unset_key_rejects_everyone(client, monkeypatch):
    monkeypatch.setattr(main, "API_KEY", None)
    response = client.post("/predict", json={"texts": ["hi"]}, headers=AUTH)
    assert response.status_code == 503


def test_missing_model(client, monkeypatch, tmp_path):
    monkeypatch.setattr(main, "MODEL_PATH", str(tmp_path / "absent.json"))
    response = client.post("/predict", json={"texts": ["hi"]}, headers=AUTH)
    assert response.status_code == 503
    assert "absent.json" in response.json()["detail"]


def test_request_validation(client, monkeypatch):
    assert client.post("/predict", json={"texts": []}, headers=AUTH).status_code == 422
    monkeypatch.setattr(main, "MAX_BATCH", 2)
    response = client.post("/predict", json={"texts": ["a", "b", "c"]}, headers=AUTH)
    assert response.status_code == 400


def test_classify_without_probabilities():
    docs = prepare(separable_docs(300, seed=2))
    classifier = train_classifier(ModelKind.SVM_LINEAR, docs, hyperparameters={"learning_rate": 0.1})
    results = main.classify(classifier, ["lovely sunshine"])
    assert results == [{"text": "lovely sunshine", "label": "positive"}]


def _tool(tool):
    # fastmcp may wrap decorated tools; the plain coroutine lives on .fn
    return getattr(tool, "fn", tool)


def test_mcp_tools(client):
    result = asyncio.run(_tool(main.classify_emotion)("i am so happy"))
    assert result["label"] == "positive"
    description = asyncio.run(_tool(main.describe_model)())
    assert description["kind"] == "logreg"


def test_mcp_tool_reports_missing_model(client, monkeypatch, tmp_path):
    monkeypatch.setattr(main, "MODEL_PATH", str(tmp_path / "gone.json"))
    result = asyncio.run(_tool(main.classify_emotion)("hello"))
    assert "error" in result
