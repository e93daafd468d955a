import json

import pytest

from app import create_app


@pytest.fixture
def client():
    app = create_app(':memory:')
    app.config['TESTING'] = True
    return app.test_client()


def test_health(client):
    response = client.get('/health')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'healthy'


def test_builtin_rate_is_recorded(client):
    response = client.post('/api/rate?builtin=translation-sup')
    assert response.status_code == 200
    result = json.loads(response.data)
    assert result['success'] and result['status'] == 'verified'
    assert result['report']['interval']['upper'] == 2.0

    runs = client.get('/api/runs').get_json()
    assert [r['status'] for r in runs] == ['verified']
    stored = json.loads(client.get(f"/api/runs/{result['run_id']}").data)
    assert stored['report']['fingerprint'] == result['report']['fingerprint']
    assert client.get('/api/stats').get_json()['runs_by_command'] == {'rate': 1}


def test_problem_in_the_body(client):
    body = json.dumps({'game': {'payoff': [[[2.0, 0.0], [0.0, 2.0]]],
                                'transition': [[[[1.0], [1.0]], [[1.0], [1.0]]]]},
                       'horizon': 50})
    result = json.loads(client.post('/api/game', data=body).data)
    assert result['status'] == 'verified'
    assert result['report']['interval']['upper'] == pytest.approx(1.0, abs=1e-9)


def test_bad_requests(client):
    assert client.post('/api/rate').status_code == 400
    assert client.post('/api/rate?builtin=nope').status_code == 404
    response = client.post('/api/rate', data='{"horizon": 0}')
    assert response.status_code == 400
    assert response.get_json()['error_type'] == 'ProblemError'
    assert client.get('/api/runs/99').status_code == 404


def test_failures_are_logged(client):
    client.post('/api/rate', data='{"horizon": 0}')
    logs = client.get('/api/logs?level=ERROR').get_json()
    assert logs and 'rate failed' in logs[0]['message']
