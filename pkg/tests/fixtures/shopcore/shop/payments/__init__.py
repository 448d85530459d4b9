"""Payment gateways and the charge workflow."""

from .gateway import Gateway
from .processor import PaymentProcessor
