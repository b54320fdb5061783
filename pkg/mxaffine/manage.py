#!/usr/bin/env python
"""Command-line entry point: ``python manage.py <subcommand> [options]``."""
import logging
import logging.config
import sys

from commands.forms import load_config
from commands.routes import build_parser, dispatch
from core.exceptions import ConfigurationError, MxAffineError
from mxaffine import settings

logger = logging.getLogger('mxaffine')


def main(argv=None):
    logging.config.dictConfig(settings.LOGGING)
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and args.seed < 0:
            raise ConfigurationError(
                f'seed must be nonnegative, got {args.seed}'
            )
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        dispatch(args, config)
    except MxAffineError as error:
        logger.error('%s', error)
        return error.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
