"""Deterministic protocol engine and discrete-event simulator for
blockchain-negotiated edge federation, with an SOA request/response baseline
and a reproducible experiment harness."""

from .agents import (
    ConsumerProfile,
    DeploymentModel,
    PricingContext,
    ProviderProfile,
    ProviderUnavailable,
    compute_bid_price,
    soa_federate,
)
from .contract import (
    ContractError,
    ContractGenesis,
    FederationContract,
    OverlayEndpoint,
    Phase,
    ServiceRequirements,
    SlaTerms,
    select_winner,
    write_event_log,
)
from .ledger import (
    Address,
    Algorithm,
    Block,
    ConsensusConfig,
    Ledger,
    LedgerError,
    Transaction,
    finality_delay_us,
    write_chain_dump,
)
from .metrics import (
    AggregateStats,
    FederationTrace,
    PhaseBreakdown,
    aggregate,
    compare_rows,
    decompose,
    read_csv,
    write_csv,
    write_jsonl,
)
from .simkernel import (
    ConfigInvalid,
    EventQueue,
    ScenarioConfig,
    SeededRng,
    generate_topology,
    load_config,
    parse_config,
    run_once,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "Address",
    "AggregateStats",
    "Algorithm",
    "Block",
    "ConfigInvalid",
    "ConsensusConfig",
    "ConsumerProfile",
    "ContractError",
    "ContractGenesis",
    "DeploymentModel",
    "EventQueue",
    "FederationContract",
    "FederationTrace",
    "Ledger",
    "LedgerError",
    "OverlayEndpoint",
    "Phase",
    "PhaseBreakdown",
    "PricingContext",
    "ProviderProfile",
    "ProviderUnavailable",
    "ScenarioConfig",
    "SeededRng",
    "ServiceRequirements",
    "SlaTerms",
    "Transaction",
    "aggregate",
    "compare_rows",
    "compute_bid_price",
    "decompose",
    "finality_delay_us",
    "generate_topology",
    "load_config",
    "parse_config",
    "read_csv",
    "run_once",
    "run_scenario",
    "select_winner",
    "soa_federate",
    "write_chain_dump",
    "write_csv",
    "write_event_log",
    "write_jsonl",
]
