package com.vuldroid.application;

import android.content.Context;
import android.content.Intent;
import android.net.Uri;
import android.os.Bundle;
import android.webkit.WebSettings;
import android.webkit.WebView;
import android.webkit.WebViewClient;

import androidx.appcompat.app.AppCompatActivity;

import java.lang.reflect.Method;

/**
 * Shows blog posts. Reachable through the vuldroid://blogs deep link.
 */
public class BlogsViewer extends AppCompatActivity {

    private WebView webView;

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_blogs_viewer);

        webView = findViewById(R.id.blogsWebView);
        WebSettings settings = webView.getSettings();
        settings.setJavaScriptEnabled(true);
        settings.setAllowFileAccess(true);
        webView.setWebViewClient(new WebViewClient());

        Intent intent = getIntent();
        Uri data = intent.getData();
        if (data != null && "vuldroid".equals(data.getScheme())) {
            // deep link parameter loaded without any host check
            String url = data.getQueryParameter("url");
            webView.loadUrl(url);
        } else {
            webView.loadUrl("https://vuldroid.example/blogs");
        }

        loadPlugin();
    }

    private void loadPlugin() {
        try {
            Context pluginContext = createPackageContext("com.vuldroid.plugin",
                    CONTEXT_INCLUDE_CODE | CONTEXT_IGNORE_SECURITY);
            ClassLoader loader = pluginContext.getClassLoader();
            Class<?> pluginClass = loader.loadClass("com.vuldroid.plugin.Loader");
            Method init = pluginClass.getMethod("init", Context.class);
            init.invoke(null, this);
        } catch (Exception ignored) {
            // plugin is optional
        }
    }
}
