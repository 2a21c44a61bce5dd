#!/usr/bin/env python3
"""Record annotation-service API fixtures for the frontend contract tests.

Runs the real service in-process and captures served task payloads plus
the server's accept/reject verdict for a matrix of rating and vote
payloads. The frontend asserts its client-side validator agrees with
every recorded verdict, so UI sessions can only emit payloads the server
accepts.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from regionqar.annotation import AnnotationService, create_app
from regionqar.records import BoxGeometry, ImageRecord, QarInstance, ReferenceMode, Region
from regionqar.store import CorpusStore

OUT_DIR = Path(__file__).resolve().parents[1] / "frontend" / "fixtures"


def build_client():
    store = CorpusStore(tempfile.mkdtemp(), run_id="fixture-run", seed=0)
    service = AnnotationService(store)
    instances = [
        QarInstance(
            instance_id=f"img000:id:{k}:1",
            image_id="img000",
            mode=ReferenceMode.ID_BASED,
            question=f"What might be [0] and [{k % 3}] discussing?",
            answer="They seem to be planning a trip.",
            rationale="The map on the table suggests travel planning.",
            mentioned_ids=frozenset({0, k % 3}),
            generation_round=1,
            turn=k + 1,
        )
        for k in range(3)
    ]
    renders = {i.instance_id: f"annotation_renders/{i.instance_id.replace(':', '_')}.png"
               for i in instances}
    service.create_rating_tasks(instances, renders)
    service.create_pairwise_tasks(
        [
            {
                "task_key": f"cmp{k}",
                "image_uri": f"annotation_renders/cmp{k}.png",
                "question": "What is the person in the foreground doing?",
                "response_a": "Reading a folded map near the bench.",
                "response_b": "Waiting for a bus while checking the time.",
            }
            for k in range(3)
        ],
        criterion="overall",
        seed=7,
    )
    return TestClient(create_app(service))


def record_tasks(client):
    rating = client.get("/tasks/next", params={"kind": "rating", "annotator": "rec"}).json()
    pairwise = client.get("/tasks/next", params={"kind": "pairwise", "annotator": "rec"}).json()
    by_id = client.get(f"/tasks/{rating['task']['task_id']}").json()
    return {"rating_next": rating, "pairwise_next": pairwise, "rating_by_id": by_id}


def record_rating_cases():
    """Schema verdict for every (qa, qar) combination, including out-of-range
    values; a fresh service per case keeps the verdicts stateless."""
    cases = []
    combos = [(qa, qar) for qa in (0, 1, 2, 3, 4) for qar in (None, 0, 1, 2, 3, 4)]
    for n, (qa, qar) in enumerate(combos):
        client = build_client()
        task_id = client.get(
            "/tasks/next", params={"kind": "rating", "annotator": "probe"}
        ).json()["task"]["task_id"]
        payload = {
            "task_id": task_id,
            "annotator_id": f"case-{n}",
            "qa_rating": qa,
            "qar_rating": qar,
        }
        resp = client.post("/ratings", json=payload)
        cases.append({"payload": payload, "accepted": resp.status_code == 200})
    return cases


def record_vote_cases():
    cases = []
    for n, choice in enumerate(["A", "B", "Tie", "C", "", "a", "tie"]):
        client = build_client()
        task_id = client.get(
            "/tasks/next", params={"kind": "pairwise", "annotator": "probe"}
        ).json()["task"]["task_id"]
        payload = {"task_id": task_id, "annotator_id": f"vcase-{n}", "choice": choice}
        resp = client.post("/votes", json=payload)
        cases.append({"payload": payload, "accepted": resp.status_code == 200})
    return cases


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    client = build_client()
    (OUT_DIR / "task_views.json").write_text(
        json.dumps(record_tasks(client), indent=2) + "\n"
    )
    (OUT_DIR / "rating_payload_cases.json").write_text(
        json.dumps(record_rating_cases(), indent=2) + "\n"
    )
    (OUT_DIR / "vote_payload_cases.json").write_text(
        json.dumps(record_vote_cases(), indent=2) + "\n"
    )
    print(f"fixtures written to {OUT_DIR}")


if __name__ == "__main__":
    main()
