"""
Flask application for edge estimation and graph analysis
"""
import json
import logging

import numpy as np
from flask import Flask, jsonify, request

from config import CI_LEVEL, FLASK_DEBUG, FLASK_HOST, FLASK_PORT, VERSION
from errors import NumericalError, ScoreInfError
from estimators import confidence_interval, p_values, three_step_edge, three_step_edge_groupL
from harness import analyze_dataset
from models import Family, ModelSpec, family_info
from score_engine import DataMatrix

logger = logging.getLogger(__name__)

app = Flask(__name__)


class RequestError(ValueError):
    pass


def _parse_data(payload):
    """Family, weight function and data matrix from a request body"""
    if not payload:
        raise RequestError("request body must be JSON")
    try:
        family = Family(payload.get("family", ""))
    except ValueError:
        raise RequestError(f"unknown family {payload.get('family')!r}; choose from {[f.value for f in Family]}")
    rows = payload.get("data")
    if not rows:
        raise RequestError("please provide a non-empty 'data' matrix (list of rows)")
    try:
        values = np.asarray(rows, dtype=float)
    except (TypeError, ValueError):
        raise RequestError("'data' must be a rectangular numeric matrix")
    dm = DataMatrix(values, family_info(family).domain, payload.get("columns"))
    spec = ModelSpec.template(family, dm.p, payload.get("weight_fn"))
    return family, spec, dm


def _error(e):
    if isinstance(e, (RequestError, ScoreInfError, ValueError)) and not isinstance(e, NumericalError):
        return jsonify({'error': str(e)}), 400
    if isinstance(e, NumericalError):
        return jsonify({'error': str(e), 'kind': type(e).__name__}), 422
    return jsonify({'error': str(e)}), 500


@app.route('/health', methods=['GET'])
def health():
    return jsonify({'status': 'ok', 'version': VERSION})


@app.route('/estimate', methods=['POST'])
def estimate():
    """
    Edge estimate, confidence interval and p-value

    Expects JSON with:
        - family: model family
        - data: n x p matrix (list of rows)
        - edge: [a, b], 1-based
        - level: optional confidence level
        - weight_fn: optional weight function

    Returns JSON with the estimate
    """
    try:
        payload = request.get_json(silent=True)
        family, spec, dm = _parse_data(payload)
        edge = payload.get('edge')
        if not edge or len(edge) != 2:
            raise RequestError("please provide 'edge' as [a, b] (1-based)")
        a, b = int(edge[0]) - 1, int(edge[1]) - 1
        level = float(payload.get('level', CI_LEVEL))

        logger.info("=" * 70)
        logger.info("Estimate request: %s, n=%d, p=%d, edge (%d,%d)", family.value, dm.n, dm.p, a + 1, b + 1)
        logger.info("=" * 70)

        logger.info("Step 1: Three-step estimate...")
        estimator = three_step_edge_groupL if spec.L > 1 else three_step_edge
        est = estimator(spec, dm, a, b)

        logger.info("Step 2: Confidence interval and p-value...")
        ci = confidence_interval(est, level)
        pv = p_values(est)

        return jsonify({
            'success': True,
            'edge': [a + 1, b + 1],
            'family': family.value,
            'n': dm.n,
            'estimate': est.theta_tilde.tolist(),
            'std_error': est.std_error().tolist(),
            'level': level,
            'lower': ci.lower.tolist(),
            'upper': ci.upper.tolist(),
            'p_value': pv.tolist(),
            'support_size': len(est.M_tilde),
            'converged': bool(est.converged),
        })

    except Exception as e:
        logger.error("Estimate failed: %s", e)
        return _error(e)


@app.route('/analyze', methods=['POST'])
def analyze():
    """
    All-pairs edge p-values and the thresholded graph

    Expects JSON with family, data, optional columns (node names) and
    threshold (default 0.01).
    """
    try:
        payload = request.get_json(silent=True)
        family, spec, dm = _parse_data(payload)
        threshold = float(payload.get('threshold', 0.01))
        graph = analyze_dataset(dm, family, threshold, weight_fn=spec.weight_fn)
        return jsonify({
            'success': True,
            'family': graph.family,
            'n': graph.n,
            'p': graph.p,
            'threshold': graph.threshold,
            'nodes': graph.names,
            'selected': [list(e) for e in graph.selected],
            'degrees': graph.degrees,
            'edges': json.loads(graph.edges.to_json(orient='records')),
        })

    except Exception as e:
        logger.error("Analysis failed: %s", e)
        return _error(e)


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.info("=" * 70)
    logger.info("Starting score-matching inference server")
    logger.info("=" * 70)
    logger.info("Host: %s", FLASK_HOST)
    logger.info("Port: %s", FLASK_PORT)
    logger.info("Debug: %s", FLASK_DEBUG)

    app.run(debug=FLASK_DEBUG, host=FLASK_HOST, port=FLASK_PORT)
