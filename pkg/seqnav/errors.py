'''
Exception hierarchy shared by every ``seqnav`` module.
'''

from __future__ import annotations

from typing import Any


class SeqnavError(Exception):
    '''Root of all errors raised on purpose by this package.'''


class InvalidArgumentError(SeqnavError, ValueError):
    '''An argument violates the documented precondition of an operation.'''


class DimensionMismatchError(InvalidArgumentError):
    '''Observation or action dimensions disagree between a policy and an environment.'''


class ConfigError(SeqnavError):
    '''A configuration file or mapping could not be turned into config objects.'''


class CheckpointError(SeqnavError):
    '''A checkpoint could not be read or written.'''


class TrajectoryParseError(SeqnavError):
    '''
    A trajectory CSV is malformed.

    :param str message: description of the problem
    :param int line:    1-based line number in the offending file
    '''
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f'line {line}: {message}')
        self.line = line


class NonFiniteLossError(SeqnavError):
    '''
    The PPO loss or the updated parameters became NaN or infinite and training
    stopped. The offending minibatch is never applied, but minibatches stepped
    earlier in the same update are not rolled back.

    :param dict diagnostics: loss components and batch statistics at the failure
    '''
    def __init__(self, diagnostics: dict[str, Any]) -> None:
        summary = ', '.join(f'{k}={v}' for k, v in diagnostics.items())
        super().__init__(f'non-finite PPO loss ({summary})')
        self.diagnostics = diagnostics
