"""Capture real consultation-service payloads for the frontend test suite.

Runs a scripted 5-answer consultation against an in-process service instance
on a small trained model and writes every response the UI would consume to
frontend/fixtures/.  Re-run after changing the service wire format.
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

import modn
from modn.experiments import split_train_val
from modn.service import create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

SCRIPTED_ANSWERS = [
    ("num0", 1.25),
    ("num1", -0.5),
    ("flag0", 1),
    ("cat0", "lv2"),
    ("num2", 0.75),
]


def build_model(path: Path):
    table = modn.generate_synthetic(modn.SyntheticSpec(
        n_records=300, n_continuous=3, n_binary=1, n_categorical=1,
        n_targets=3, label_mode="threshold", seed=101))
    config = modn.TrainConfig(epochs=25, batch_size=32, state_dim=8,
                              optimizer=modn.OptimizerConfig(lr=5e-3), patience=8)
    train_tab, val_tab = split_train_val(table, 0.15, 0)
    model = modn.init_model(table.schema, table.targets, config.state_dim, seed=5)
    model, _ = modn.train(model, train_tab, val_tab, config)
    modn.save_model(model, path)


def dump(name: str, payload) -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    path = FIXTURE_DIR / f"{name}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        model_path = Path(tmp) / "fixture_model.modn.json"
        build_model(model_path)
        client = TestClient(create_app(Path(tmp) / "state"))

        registered = client.post("/models", json={"path": str(model_path)}).json()
        model_id = registered["model_id"]
        dump("schema", client.get(f"/models/{model_id}/schema").json())

        session = client.post("/sessions", json={"model_id": model_id}).json()
        sid = session["session_id"]
        dump("session_created", session)
        dump("trajectory_step_0", client.get(f"/sessions/{sid}/trajectory").json())

        invalid = client.post(f"/sessions/{sid}/answers",
                              json={"feature_id": "cat0", "value": "nope"})
        assert invalid.status_code == 422, invalid.text
        dump("error_invalid_value", invalid.json())

        for i, (fid, value) in enumerate(SCRIPTED_ANSWERS, start=1):
            answer = client.post(f"/sessions/{sid}/answers",
                                 json={"feature_id": fid, "value": value})
            assert answer.status_code == 200, answer.text
            dump(f"answer_step_{i}", answer.json())
            dump(f"trajectory_step_{i}", client.get(f"/sessions/{sid}/trajectory").json())

        dump("predictions_final", client.get(f"/sessions/{sid}/predictions").json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
