import argparse
from dataclasses import dataclass, field
from typing import Callable

from core.exceptions import ConfigurationError

from . import views


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigurationError so they exit with code 1."""

    def error(self, message):
        raise ConfigurationError(f'{self.prog}: {message}')


@dataclass
class Route:
    name: str
    view: Callable
    help: str
    arguments: list = field(default_factory=list)


def argument(*flags, **options):
    return flags, options


subcommands = [
    Route('learn', views.cmd_learn,
          'learn T1/T2 and write a checkpoint plus the training trace'),
    Route('quantize', views.cmd_quantize,
          'fold a checkpoint into the toy model and quantize its weights',
          [argument('--checkpoint', required=True,
                    help='transform checkpoint written by learn')]),
    Route('ablate', views.cmd_ablate,
          'compare transformation types on the toy model',
          [argument('--methods', nargs='+', default=None,
                    help='ablation rows (default: the config list)'),
           argument('--init-schemes', nargs='+', default=None,
                    dest='init_schemes',
                    help='also compare these initialization schemes')]),
    Route('sweep-blocksize', views.cmd_sweep_blocksize,
          'activation MSE as a function of the MX block size',
          [argument('--block-sizes', nargs='+', type=int, default=None,
                    dest='block_sizes')]),
    Route('verify-bounds', views.cmd_verify_bounds,
          'check the error bounds numerically'),
    Route('gen-data', views.cmd_gen_data,
          'write synthetic calibration data'),
]


def build_parser():
    parser = ArgumentParser(
        prog='manage.py',
        description='MX quantization with learned affine transforms',
    )
    commands = parser.add_subparsers(dest='command', metavar='command',
                                     parser_class=ArgumentParser)
    commands.required = True
    for route in subcommands:
        sub = commands.add_parser(route.name, help=route.help)
        sub.add_argument('--config', default=None,
                         help='JSON experiment config')
        sub.add_argument('--seed', type=int, default=None,
                         help='overrides the config seed')
        sub.add_argument('--out', default='.', help='output directory')
        for flags, options in route.arguments:
            sub.add_argument(*flags, **options)
        sub.set_defaults(route=route)
    return parser


def dispatch(args, config):
    """Call the view of `args.command` with its extra arguments."""
    route = args.route
    extra = {}
    for flags, options in route.arguments:
        dest = options.get('dest', flags[0].lstrip('-').replace('-', '_'))
        extra[dest] = getattr(args, dest)
    return route.view(config, args.out, **extra)
