import json
import threading

import pytest
from fastapi.testclient import TestClient

from hresnas.engine import MetaParams, RunConfig, SearchEngine
from hresnas.server import create_app
from hresnas.tree import validate_architecture


def make_engine(tmp_path, max_iterations=2, max_train_epochs=3):
    config = RunConfig(
        dataset={"kind": "spiral", "n_per_class": 40, "noise_sd": 0.02,
                 "seed": 0, "test_n_per_class": 20},
        meta=MetaParams(neurons_to_add=8, prune_count=2, learning_rate=1e-2,
                        max_train_epochs=max_train_epochs, decay_epochs=1),
        seed=0, max_iterations=max_iterations,
    )
    return SearchEngine(config, tmp_path)


class TestBeforeStart:
    def test_status_and_architecture_are_503(self, tmp_path):
        client = TestClient(create_app(make_engine(tmp_path)))
        assert client.get("/status").status_code == 503
        assert client.get("/architecture").status_code == 503
        assert client.get("/events").status_code == 503

    def test_history_is_empty_not_an_error(self, tmp_path):
        client = TestClient(create_app(make_engine(tmp_path)))
        response = client.get("/history")
        assert response.status_code == 200
        assert response.json() == []


class TestReadEndpoints:
    @pytest.fixture
    def ran(self, tmp_path):
        engine = make_engine(tmp_path)
        engine.run()
        return engine, TestClient(create_app(engine))

    def test_status_snapshot(self, ran):
        engine, client = ran
        doc = client.get("/status").json()
        assert doc["epoch"] == engine.global_epoch
        assert doc["param_count"] > 0
        assert doc["meta"]["neurons_to_add"] == 8

    def test_architecture_matches_schema(self, ran):
        _, client = ran
        validate_architecture(client.get("/architecture").json())

    def test_history_since_filters(self, ran):
        engine, client = ran
        full = client.get("/history", params={"since": 0}).json()
        assert len(full) == engine.global_epoch
        later = client.get("/history", params={"since": full[2]["epoch"]}).json()
        assert [e["epoch"] for e in later] == [e["epoch"] for e in full[3:]]
        beyond = client.get("/history",
                            params={"since": engine.global_epoch + 50}).json()
        assert beyond == []


class TestPostMeta:
    def test_valid_update_merges_and_persists(self, tmp_path):
        engine = make_engine(tmp_path)
        engine.watcher.ensure_file()
        client = TestClient(create_app(engine))
        doc = client.post("/meta", json={"learning_rate": 1e-4}).json()
        assert doc["learning_rate"] == 1e-4
        assert doc["neurons_to_add"] == 8  # merged, not replaced
        on_disk = json.loads(engine.watcher.path.read_text())
        assert on_disk["learning_rate"] == 1e-4

    def test_invalid_update_is_400_naming_field(self, tmp_path):
        engine = make_engine(tmp_path)
        engine.watcher.ensure_file()
        client = TestClient(create_app(engine))
        response = client.post("/meta", json={"prune_ratio": 1.5})
        assert response.status_code == 400
        assert "prune_ratio" in response.json()["detail"]
        # nothing applied
        assert json.loads(engine.watcher.path.read_text())["prune_ratio"] is None

    def test_applied_at_next_boundary_and_visible_in_status(self, tmp_path):
        engine = make_engine(tmp_path)
        client = TestClient(create_app(engine))
        engine.run(1)
        client.post("/meta", json={"learning_rate": 5e-4})
        assert engine.status()["meta"]["learning_rate"] == 1e-2  # not yet
        engine.run(1)
        assert engine.status()["meta"]["learning_rate"] == 5e-4
        assert client.get("/status").json()["meta"]["learning_rate"] == 5e-4

    def test_concurrent_posts_last_writer_wins_file_stays_valid(self, tmp_path):
        engine = make_engine(tmp_path)
        engine.watcher.ensure_file()
        client = TestClient(create_app(engine))
        rates = [1e-5 * (i + 1) for i in range(16)]

        def post(rate):
            client.post("/meta", json={"learning_rate": rate})

        threads = [threading.Thread(target=post, args=(r,)) for r in rates]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        doc = json.loads(engine.watcher.path.read_text())  # parses cleanly
        assert doc["learning_rate"] in rates
        assert doc["neurons_to_add"] == 8


class TestEventStream:
    def test_stream_delivers_ordered_history_with_backfill_cursor(self, tmp_path):
        import time

        engine = make_engine(tmp_path, max_iterations=1)
        client = TestClient(create_app(engine))
        engine.run(1)  # puts some history on the books; engine marked started
        worker = threading.Thread(target=engine.run, args=(1,))
        worker.start()
        while engine.clean_stop:  # wait for the worker to actually begin
            time.sleep(0.005)

        received = []
        with client.stream("GET", "/events") as stream:
            for line in stream.iter_lines():
                if not line.startswith("data: "):
                    continue
                event = json.loads(line[len("data: "):])
                received.append(event)
        worker.join()

        assert received[0]["type"] == "hello"
        cursor = received[0]["cursor"]
        assert cursor >= 4  # 3 train + 1 decay epochs from the first run
        epochs = [e["epoch"] for e in received if e["type"] == "history"]
        assert epochs == sorted(epochs)
        # backfilling up to the cursor plus the streamed events covers every
        # epoch with no holes (duplicates at the seam are fine)
        covered = sorted(set(range(1, cursor + 1)) | set(epochs))
        assert covered == list(range(1, engine.global_epoch + 1))
        assert max(epochs) == engine.global_epoch

    def test_phase_markers_present(self, tmp_path):
        engine = make_engine(tmp_path, max_iterations=1)
        sub = engine.subscribe()
        engine.run()
        phases = []
        while (event := sub.get(0.01)) is not None:
            if event["type"] == "phase":
                phases.append(event["phase"])
        for expected in ("grow", "train", "checkpoint"):
            assert expected in phases
