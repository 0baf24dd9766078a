# Gate commands: matrix dumps, identity verification, fidelity scoring

import json
import logging

import gate_library as gl
import pulse_simulator as ps
import qudit_algebra as qa
from commands.common import EXIT_FAILED, EXIT_OK, emit, require_file

logger = logging.getLogger(__name__)

PARAM_FLAGS = {
    'theta': 'Mixing angle theta (rad)',
    'phi': 'Drive phase phi (rad)',
    'gamma': 'Conditional phase gamma (rad)',
    'beta': 'Exchange angle beta (rad) for iswap-beta',
    'varphi': 'Evolution angle varphi (rad) for the DIV family',
}


def add_param_flags(parser):
    for name, text in PARAM_FLAGS.items():
        parser.add_argument(f'--{name}', type=float, default=None, help=f"{text}; only gates that take it accept it")


def gate_params(args) -> dict:
    return {name: getattr(args, name) for name in PARAM_FLAGS if getattr(args, name) is not None}


class GateCommands:
    def dump(self, args) -> int:
        """Serialized matrix of a named gate"""
        params = gate_params(args)
        op = gl.named_gate(args.name, **params)
        emit({'gate': args.name, 'params': params, 'unitary': op.is_unitary(), **qa.operator_to_json(op)}, args.out)
        return EXIT_OK

    def verify(self, args) -> int:
        """Analytic identity check; exit 1 when any residual exceeds the tolerance"""
        report = gl.verify_identity(args.identity, args.grid, args.seed, args.tol)
        emit(report.to_dict(), args.out)
        if report.passed:
            logger.info(f"✅ {args.identity}: max residual {report.max_residual:.2e}")
            return EXIT_OK
        logger.error(f"❌ {args.identity}: max residual {report.max_residual:.2e} above {args.tol:.1e}")
        return EXIT_FAILED

    def fidelity(self, args) -> int:
        """Average gate fidelity of a serialized operator against a named gate"""
        require_file(args.matrix, 'matrix file')
        with open(args.matrix, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{args.matrix}: invalid JSON ({e.msg})") from e
        op = qa.operator_from_json(data)
        target = gl.named_gate(args.target, **gate_params(args))
        projector = None
        if args.qubit_sites is not None:
            projector = qa.ComputationalProjector(op.shape, tuple(args.qubit_sites))
        elif op.dim != target.dim:
            raise qa.ShapeMismatchError(f"operator dimension {op.dim} differs from target {target.dim}; "
                                        f"pass --qubit-sites to project")
        report = ps.average_gate_fidelity(op, target, projector, optimize_phases=not args.no_virtual_z,
                                          name=args.target)
        emit(report.to_dict(), args.out)
        if args.min_fidelity is not None and report.fidelity < args.min_fidelity:
            logger.error(f"❌ F = {report.fidelity:.6f} below {args.min_fidelity}")
            return EXIT_FAILED
        return EXIT_OK


def setup(subparsers):
    commands = GateCommands()

    dump = subparsers.add_parser('gate-dump', help='Print the matrix of a named gate',
                                 description='Serialize a named gate as JSON with 12 significant digits.')
    dump.add_argument('name', choices=sorted(gl.NAMED_GATES), help='Gate name')
    add_param_flags(dump)
    dump.add_argument('--out', help='Write the JSON here instead of stdout')
    dump.set_defaults(handler=commands.dump)

    verify = subparsers.add_parser('gate-verify', help='Check a gate identity numerically',
                                   description='Verify an analytic gate identity over a parameter grid.')
    verify.add_argument('identity', choices=sorted(set(gl.IDENTITY_CHECKS) | set(gl.IDENTITY_ALIASES)),
                        help='Identity to check')
    verify.add_argument('--grid', type=int, default=5, help='Grid points per parameter (default 5)')
    verify.add_argument('--seed', type=int, default=7, help='Seed for random parameter draws (default 7)')
    verify.add_argument('--tol', type=float, default=qa.ALGEBRA_TOL,
                        help=f'Residual tolerance (default {qa.ALGEBRA_TOL:g})')
    verify.add_argument('--out', help='Write the JSON report here instead of stdout')
    verify.set_defaults(handler=commands.verify)

    fid = subparsers.add_parser('fidelity', help='Score a serialized operator against a named gate',
                                description='Average gate fidelity with optional virtual-Z correction.')
    fid.add_argument('--matrix', required=True, help='Operator JSON file (see FORMATS.md)')
    fid.add_argument('--target', required=True, choices=sorted(gl.NAMED_GATES), help='Target gate name')
    add_param_flags(fid)
    fid.add_argument('--qubit-sites', type=int, nargs='+', default=None,
                     help='Sites holding the qubits when the matrix is full-register')
    fid.add_argument('--no-virtual-z', action='store_true', help='Report F without virtual-Z optimisation')
    fid.add_argument('--min-fidelity', type=float, default=None, help='Exit 1 when F falls below this value')
    fid.add_argument('--out', help='Write the JSON report here instead of stdout')
    fid.set_defaults(handler=commands.fidelity)
