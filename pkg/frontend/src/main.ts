import { ApiClient } from "./api.js";
import { createApp } from "./ui.js";

const root = document.getElementById("app");
if (root) {
  const app = createApp(root, new ApiClient(""));
  void app.start();
}
