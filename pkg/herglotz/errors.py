from typing import Any, Dict, Optional, Tuple


class HerglotzError(Exception):
    pass


class ParseError(HerglotzError, ValueError):
    def __init__(self, message: str, line: int, column: int, token: str = "") -> None:
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        where = f" near `{token}`" if token else ""
        super().__init__(f"{line}:{column}: {message}{where}")


class UnboundAtomError(HerglotzError, KeyError):
    def __init__(self, atom: str) -> None:
        self.atom = atom
        super().__init__(f"No numeric value bound to `{atom}`")

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return str(self.args[0])


class DomainError(HerglotzError, ValueError):
    pass


class OrderError(HerglotzError, ValueError):
    pass


class OrderOverflowError(OrderError):
    pass


class NotClosedError(HerglotzError, ValueError):
    def __init__(self, residuals: Dict[Tuple[str, str], Any]) -> None:
        self.residuals = residuals
        listing = ", ".join(f"C_{mu}{nu} = {value}" for (mu, nu), value in residuals.items())
        super().__init__(
            f"The Lagrangian does not have closed action dependence ({listing})."
            " Herglotz operators do not commute, so the higher-order equations are not defined"
        )


class SingularHessianError(HerglotzError, ArithmeticError):
    def __init__(self, time: float, condition: float) -> None:
        self.time = time
        self.condition = condition
        super().__init__(f"Velocity Hessian is singular at t = {time:g} (condition number {condition:.3g})")


class NonFiniteStateError(HerglotzError, ArithmeticError):
    def __init__(self, message: str, *, time: Optional[float] = None, step: Optional[int] = None) -> None:
        self.time = time
        self.step = step
        super().__init__(message)


class StabilityError(HerglotzError, ValueError):
    pass


class StencilOverflowError(HerglotzError, ValueError):
    pass


class FixedPointDivergenceError(HerglotzError, ArithmeticError):
    def __init__(self, time_index: int, x_index: int) -> None:
        self.point = (time_index, x_index)
        super().__init__(f"Action-density fixed-point iteration diverged at grid point (k={time_index}, j={x_index})")


class ConstraintViolationError(HerglotzError, ValueError):
    pass


class GridError(HerglotzError, ValueError):
    pass
