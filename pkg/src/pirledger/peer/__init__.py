from .chaincode import Peer, TxResponse
from .state import DEFAULT_CHANNELS, ChannelConfig, ChannelState, StoreError, load_config

__all__ = ["Peer", "TxResponse", "DEFAULT_CHANNELS", "ChannelConfig", "ChannelState", "StoreError", "load_config"]
