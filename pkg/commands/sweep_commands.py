# Calibration sweep commands

import json
import logging
import os
import sys
from dataclasses import replace

import calibration_sweeps as cs
import device_data as dd
from commands.common import EXIT_OK, default_jobs, output_dir, require_file

logger = logging.getLogger(__name__)


def _chevron_observable(result: cs.SweepResult):
    """Index of the first population observable, if the grid is time x one detuning."""
    names = result.spec.axis_names
    detuning_axes = {'detuning1_ghz', 'detuning2_ghz'}
    if len(names) != 2 or 'time_ns' not in names or not detuning_axes & set(names):
        return None
    for k, obs in enumerate(result.spec.observables):
        if obs.kind == 'population':
            return k
    return None


class SweepCommands:
    def sweep(self, args) -> int:
        """Evaluate a sweep spec; writes <name>.csv and <name>.summary.json"""
        require_file(args.spec, 'sweep spec')
        cfg = dd.load_sweep_spec(args.spec)
        spec = cs.SweepSpec.from_config(cfg, fine_grid=args.fine_grid)
        if args.check_convergence is False:
            spec = replace(spec, check_convergence=False)
        jobs = args.jobs or cfg.get('jobs') or default_jobs()
        out = args.out or output_dir()

        logger.info('=' * 60)
        result = cs.run_sweep(spec, jobs)
        summary = result.summary()

        chevron = _chevron_observable(result)
        if chevron is not None:
            summary['chevron_tip'] = cs.find_chevron_tip(result, chevron).to_dict()
        fidelities = [k for k, o in enumerate(spec.observables) if o.kind == 'fidelity']
        if set(spec.axis_names) == {'phase_diff_rad', 'target_phi_rad'} and fidelities:
            summary['phase_ridge'] = cs.PhiScan.from_result(result, fidelities[0]).summary()
        logger.info('=' * 60)

        cs.write_sweep_csv(result, os.path.join(out, f"{spec.name}.csv"))
        cs.write_summary(summary, os.path.join(out, f"{spec.name}.summary.json"))
        sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + '\n')
        return EXIT_OK


def setup(subparsers):
    commands = SweepCommands()
    sweep = subparsers.add_parser('sweep', help='Run a calibration sweep',
                                  description='Evaluate observables on a grid of pulse parameters.')
    sweep.add_argument('--spec', required=True, help='Sweep spec JSON file (see FORMATS.md)')
    sweep.add_argument('--out', help='Output directory (default: SIMULGATE_OUTPUT_DIR or the current directory)')
    sweep.add_argument('--jobs', type=int, default=None,
                       help='Worker processes (default: sweep file value, then SIMULGATE_JOBS, then 1)')
    sweep.add_argument('--fine-grid', action='store_true',
                       help=f'Use {cs.FINE_GRID_COUNT} points per axis instead of the counts in the sweep file')
    sweep.add_argument('--no-check-convergence', dest='check_convergence', action='store_false', default=None,
                       help='Skip the step-halving check at every grid point (coarse scans)')
    sweep.set_defaults(handler=commands.sweep)
