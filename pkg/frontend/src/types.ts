// View-model types mirroring the /api/snapshot contract (docs/api.md).

export interface LightView {
  id: string;
  x: number;
  y: number;
  mode: "everyday" | "emergency";
  guidance: string;
  readings: Record<string, number> | null;
  last_frame_ms: number | null;
  messages: number;
  size_bytes: number;
}

export interface DeviceView {
  id: string;
  x: number;
  y: number;
  emergency: boolean;
  messages: number;
  size_bytes: number;
}

export interface CenterView {
  x: number;
  y: number;
  messages: number;
  size_bytes: number;
}

export interface LinkView {
  a: string;
  b: string;
  kind: string;
  up: boolean;
}

export interface AlarmView {
  region: string[];
  issued_ms: number;
  cause: string;
}

export interface AlertView {
  time_ms: number;
  source: string;
  cause: string;
}

export interface Snapshot {
  time_ms: number;
  lights: LightView[];
  devices: DeviceView[];
  center: CenterView | null;
  links: LinkView[];
  alarms: AlarmView[];
  alerts: AlertView[];
}

/** One record from /api/events; `t` is simulated milliseconds. */
export interface EventRecord {
  t: number;
  kind: string;
  [field: string]: unknown;
}
