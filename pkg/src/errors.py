"""Exception hierarchy. Each class carries the process exit code main.py reports."""


class PhonosignalError(Exception):
    exit_code = 1


class InputError(PhonosignalError):
    exit_code = 2

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class NewickError(InputError):
    pass


class ClassMapError(InputError):
    pass


class TreeError(PhonosignalError):
    pass


class PolytomyError(TreeError):
    pass


class SingularMatrixError(TreeError):
    pass


class CharacterError(PhonosignalError):
    pass


class SignalError(PhonosignalError):
    pass


class EmptyResultError(PhonosignalError):
    exit_code = 3
