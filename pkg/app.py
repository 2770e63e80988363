from flask import Flask, request, jsonify
from flask_cors import CORS
from flask_socketio import SocketIO, emit
import logging
from datetime import datetime
import traceback

from closure_engine import __version__
from closure_engine.config import ExperimentConfig, config
from closure_engine.errors import ConfigError
from closure_engine.experiment_runner import ExperimentRunner
from closure_engine.report_generator import ReportGenerator

app = Flask(__name__)
CORS(app)
socketio = SocketIO(app, cors_allowed_origins="*")

logging.basicConfig(
    level=getattr(logging, config.log_level),
    format=config.log_format
)
logger = logging.getLogger(__name__)

logger.info(f"MesoClosure Engine v{__version__} initialized")
logger.info(f"Regularization defaults: {config.get_regularization_defaults()}")
logger.info(f"Dynamics defaults: {config.get_dynamics_defaults()}")


def broadcast_progress(update):
    """Forward runner progress to Socket.IO clients"""
    socketio.emit('experiment_progress_update', {
        **update,
        'timestamp': datetime.now().isoformat()
    })


runner = ExperimentRunner(progress_callback=broadcast_progress)

SWEEPS = {
    'window': runner.sweep_window,
    'eta': runner.sweep_eta,
    'N': runner.sweep_scale,
}


@socketio.on('connect')
def handle_connect():
    logger.info("WebSocket client connected")
    emit('connected', {'status': 'connected', 'message': 'Connected to MesoClosure Engine'})


@socketio.on('disconnect')
def handle_disconnect():
    logger.info("WebSocket client disconnected")


@socketio.on('request_engine_status')
def handle_status_request(data):
    logger.info(f"Engine status request: {data}")
    emit('engine_status_response', {
        'status': 'ready',
        'message': 'Closure engine ready for new experiments',
        'timestamp': datetime.now().isoformat()
    })


def config_error_response(e):
    return jsonify({
        "error": "Invalid experiment configuration",
        "code": "INVALID_CONFIG",
        "details": str(e),
        "engine_version": __version__
    }), 400


@app.route('/')
def index():
    return jsonify({
        "message": "MesoClosure - regularized deconvolution closure API",
        "version": __version__,
        "endpoints": {
            "experiment": "/api/experiment",
            "sweep": "/api/sweep",
            "health": "/api/health",
            "config": "/api/config"
        },
        "websocket_events": {
            "connect": "Emitted when client connects",
            "experiment_progress_update": "Per-snapshot progress of running experiments"
        }
    })


@app.route('/api/health')
def health_check():
    return jsonify({
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "engine_version": __version__
    })


@app.route('/api/config')
def get_config():
    """Get current engine configuration"""
    return jsonify({
        "engine_version": __version__,
        "configuration": config.to_dict(),
        "timestamp": datetime.now().isoformat()
    })


@app.route('/api/experiment', methods=['POST'])
def run_experiment():
    data = request.get_json(silent=True)
    if data is None:
        return jsonify({
            "error": "JSON experiment configuration is required",
            "code": "MISSING_CONFIG"
        }), 400

    try:
        experiment = ExperimentConfig.from_dict(data)
        if experiment.is_sweep:
            raise ConfigError("Lists of N, eta or window describe a sweep; use /api/sweep")
    except ConfigError as e:
        return config_error_response(e)

    try:
        report = runner.run_experiment(experiment)
        if report.error:
            return jsonify({
                "error": "Experiment failed",
                "code": "EXPERIMENT_FAILED",
                "details": report.error,
                "report": report.to_dict()
            }), 500

        return jsonify({
            "success": True,
            "report": report.to_dict(),
            "resolved_config": experiment.resolved(),
            "engine_version": __version__,
            "timestamp": datetime.now().isoformat()
        })

    except Exception as e:
        logger.error(f"Critical error during experiment: {str(e)}")
        logger.error(traceback.format_exc())
        return jsonify({
            "error": "Internal server error during experiment",
            "code": "EXPERIMENT_ERROR",
            "details": str(e),
            "engine_version": __version__
        }), 500


@app.route('/api/sweep', methods=['POST'])
def run_sweep():
    data = request.get_json(silent=True) or {}
    sweep = data.get('sweep')
    if sweep not in SWEEPS:
        return jsonify({
            "error": f"sweep must be one of {sorted(SWEEPS)}",
            "code": "INVALID_SWEEP"
        }), 400

    try:
        experiment = ExperimentConfig.from_dict(data.get('config', {}))
    except ConfigError as e:
        return config_error_response(e)

    try:
        reports = SWEEPS[sweep](experiment)
        manifest = None
        if data.get('emit'):
            manifest = ReportGenerator(experiment.output_path()).emit_reports(reports, experiment.resolved())

        return jsonify({
            "success": all(r.error is None for r in reports),
            "sweep": sweep,
            "reports": [r.to_dict() for r in reports],
            "manifest": manifest,
            "engine_version": __version__,
            "timestamp": datetime.now().isoformat()
        })

    except Exception as e:
        logger.error(f"Critical error during sweep: {str(e)}")
        logger.error(traceback.format_exc())
        return jsonify({
            "error": "Internal server error during sweep",
            "code": "SWEEP_ERROR",
            "details": str(e),
            "engine_version": __version__
        }), 500


@app.errorhandler(404)
def not_found(error):
    return jsonify({
        "error": "Endpoint not found",
        "code": "NOT_FOUND",
        "engine_version": __version__
    }), 404


@app.errorhandler(500)
def internal_error(error):
    return jsonify({
        "error": "Internal server error",
        "code": "INTERNAL_ERROR",
        "engine_version": __version__
    }), 500


if __name__ == '__main__':
    logger.info(f"Starting MesoClosure API v{__version__} on http://0.0.0.0:5000")
    socketio.run(app, debug=True, host='0.0.0.0', port=5000)
