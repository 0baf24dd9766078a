# Device simulation commands

import logging
from dataclasses import replace

import calibration_sweeps as cs
import device_data as dd
import pulse_simulator as ps
from commands.common import EXIT_FAILED, EXIT_OK, emit, require_file, resolve_output

logger = logging.getLogger(__name__)

SCHEMES = ('tunable-qubits', 'tunable-coupler', 'div-tunable-qubits')
TARGETS = sorted(set(ps.QUBIT_GATES) | set(ps.COUPLER_GATES))


def _family(scheme: str) -> str:
    return 'tunable-coupler' if scheme == 'tunable-coupler' else 'tunable-qubits'


def load_device(scheme: str, config: str = None):
    if config is None:
        cfg = dd.builtin_device(scheme)
    else:
        require_file(config, 'device config')
        cfg = dd.load_device_config(config)
        if _family(cfg['scheme']) != _family(scheme):
            raise dd.ConfigError(f"{config}: scheme '{cfg['scheme']}' does not match '{scheme}'")
    return ps.device_from_config(cfg), cfg


class SimulateCommands:
    def simulate(self, args) -> int:
        """Pulse-level simulation of one gate, optionally calibrated"""
        device, cfg = load_device(args.scheme, args.config)
        point = ps.default_point(device, args.target)
        time_ns = args.time_ns if args.time_ns is not None else cfg.get('time_ns')
        if time_ns is not None:
            point = replace(point, gate_time=float(time_ns))
        control = ps.default_control(device, args.method, args.check_convergence)
        phi = args.phi if args.phi is not None else ps.default_phi(device, point)

        logger.info('=' * 60)
        logger.info(f"📊 {args.scheme}: {args.target} at {point.gate_time:.3f} ns ({control.method}, "
                    f"step {control.step} ns)")
        try:
            if args.calibrate:
                search = {'time_window': 25.0, 'coarse': 11} if isinstance(device, ps.TunableCouplerDevice) else {}
                point, _ = ps.calibrate(device, args.target, point, control, phi, **search)
            report = ps.simulate_gate(device, args.target, point, control, phi)
        except ps.ConvergenceError as e:
            logger.error(f"❌ {e}")
            return EXIT_FAILED
        if args.calibrate:
            report.settings['calibrated'] = True
        if args.check_truncation and isinstance(device, ps.TunableCouplerDevice):
            ps.check_report_truncation(device, args.target, point, report, control, phi)

        if args.trace_csv:
            traced, schedule = ps.build_schedule(device, args.target, point)
            plan = ps.gate_plan(device, args.target)
            step_control = replace(control, step=report.settings['step_ns'])
            times, traces = ps.population_traces(traced, schedule, plan.trace_initial, plan.trace_states, step_control)
            cs.write_traces_csv(times, traces, resolve_output(args.trace_csv))
        emit(report.to_dict(), args.out)

        if args.min_fidelity is not None and report.fidelity < args.min_fidelity:
            logger.error(f"❌ F = {report.fidelity:.5f} below {args.min_fidelity}")
            return EXIT_FAILED
        return EXIT_OK


def setup(subparsers):
    commands = SimulateCommands()
    sim = subparsers.add_parser('simulate', help='Simulate a gate on a device model',
                                description='Propagate a device under a gate pulse and score it against the target.')
    sim.add_argument('scheme', choices=SCHEMES, help='Device scheme')
    sim.add_argument('--target', required=True, choices=TARGETS, help='Gate to implement')
    sim.add_argument('--config', help='Device JSON file (default: built-in parameters for the scheme)')
    sim.add_argument('--time-ns', type=float, default=None,
                     help='Gate time in ns; coupler gates include both ramps (default: analytic estimate)')
    sim.add_argument('--phi', type=float, default=None, help='Target CCZS phase phi in rad (default: from drives)')
    sim.add_argument('--method', choices=ps.INTEGRATORS, default=None,
                     help='Integrator (default: expm for tunable qubits, split for the coupler)')
    sim.add_argument('--calibrate', action='store_true', help='Local search over gate time and detunings first')
    sim.add_argument('--no-check-convergence', dest='check_convergence', action='store_false',
                     help='Report at the configured step without the step-halving check')
    sim.add_argument('--no-check-truncation', dest='check_truncation', action='store_false',
                     help='Skip the 4-level truncation spot check on tunable-coupler runs')
    sim.add_argument('--trace-csv', help='Write population traces of the tracked states to this CSV')
    sim.add_argument('--min-fidelity', type=float, default=None, help='Exit 1 when F falls below this value')
    sim.add_argument('--out', help='Write the JSON report here instead of stdout')
    sim.set_defaults(handler=commands.simulate)
