// Single base-URL + token setting. In the browser it persists in
// localStorage; under tests it is constructed directly.

export interface PortalConfig {
  baseUrl: string;
  token: string;
}

const STORAGE_KEY = "qnetsim-portal-config";

export function defaultConfig(): PortalConfig {
  return { baseUrl: "", token: "" };
}

export function loadConfig(storage?: Storage): PortalConfig {
  if (!storage) return defaultConfig();
  try {
    const raw = storage.getItem(STORAGE_KEY);
    if (!raw) return defaultConfig();
    const parsed = JSON.parse(raw);
    return {
      baseUrl: typeof parsed.baseUrl === "string" ? parsed.baseUrl : "",
      token: typeof parsed.token === "string" ? parsed.token : "",
    };
  } catch {
    return defaultConfig();
  }
}

export function saveConfig(config: PortalConfig, storage?: Storage): void {
  storage?.setItem(STORAGE_KEY, JSON.stringify(config));
}
